#ifndef SECOCO_TESTS_SUPPORT_HPP_
#define SECOCO_TESTS_SUPPORT_HPP_

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <iterator>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "secoco/autodiff.hpp"
#include "secoco/ops.hpp"
#include "secoco/rng.hpp"
#include "secoco/tensor.hpp"

namespace secoco::testing {

namespace fs = std::filesystem;

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("secoco_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline numerics::Tensor random_tensor(numerics::Shape shape, std::mt19937_64& rng,
                                      float scale = 1.0f) {
  numerics::Tensor t(std::move(shape));
  std::normal_distribution<float> dist(0.0f, scale);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// sum(out * w) for a fixed random w, built as its own node so the checks do
// not depend on any op under test.
inline numerics::Var probe(const numerics::Var& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = std::make_shared<numerics::Tensor>(random_tensor(out->value.shape(), rng));
  double s = 0.0;
  for (std::size_t i = 0; i < out->value.numel(); ++i) s += out->value[i] * (*w)[i];
  return numerics::make_node(numerics::Tensor::scalar(static_cast<float>(s)), {out},
                             [w](numerics::Node& self) {
                               numerics::Tensor& g = self.inputs[0]->ensure_grad();
                               for (std::size_t i = 0; i < g.numel(); ++i) {
                                 g[i] += self.grad[0] * (*w)[i];
                               }
                             });
}

struct GradCheck {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double analytic_norm = 0.0;
  std::size_t checked = 0;
  float step = 0.0f;  // finite-difference step the comparison used
};

// Central differences on up to max_entries evenly spaced entries of `leaf`.
// `loss` rebuilds the graph from the current leaf values on every call.
// Every relu gate is pinned to its value at the unperturbed point, so the
// differences see the linear piece the analytic gradient belongs to.
//
// Every step of a doubling ladder is tried. The step is chosen without
// looking at the analytic gradient: it is the one whose estimate agrees best
// with the estimate at twice the step, which bounds both the rounding error of
// small steps and the truncation error of large ones.
inline GradCheck check_gradient(const std::function<numerics::Var()>& loss,
                                const numerics::Var& leaf, std::size_t max_entries = 48) {
  static constexpr float kSteps[] = {2.5e-3f, 5e-3f, 1e-2f, 2e-2f, 4e-2f, 8e-2f};
  constexpr std::size_t kNumSteps = std::size(kSteps);
  leaf->ensure_grad().fill(0.0f);
  std::vector<bool> center;
  {
    numerics::ReluPatternScope rec;
    const numerics::Var l = loss();
    center = rec.pattern();
    numerics::backward(l);
  }
  const numerics::Tensor analytic = leaf->grad;
  const std::size_t n = leaf->value.numel();
  const std::size_t stride = std::max<std::size_t>(1, n / max_entries);
  std::vector<std::size_t> entries;
  for (std::size_t i = 0; i < n; i += stride) entries.push_back(i);

  auto eval = [&] {
    numerics::ReluPatternScope pin(center);
    return static_cast<double>(loss()->value.item());
  };
  std::vector<std::vector<double>> numeric(kNumSteps, std::vector<double>(entries.size()));
  {
    numerics::NoGradGuard guard;
    for (std::size_t k = 0; k < kNumSteps; ++k) {
      const float h = kSteps[k];
      for (std::size_t e = 0; e < entries.size(); ++e) {
        const std::size_t i = entries[e];
        const float orig = leaf->value[i];
        leaf->value[i] = orig + h;
        const double plus = eval();
        leaf->value[i] = orig - h;
        const double minus = eval();
        leaf->value[i] = orig;
        numeric[k][e] = (plus - minus) / (2.0 * h);
      }
    }
  }
  auto rel = [](const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t e = 0; e < a.size(); ++e) {
      diff += (a[e] - b[e]) * (a[e] - b[e]);
      na += a[e] * a[e];
      nb += b[e] * b[e];
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nb));
    return denom > 0 ? std::sqrt(diff) / denom : std::sqrt(diff);
  };

  std::size_t best = 0;
  double best_spread = INFINITY;
  for (std::size_t k = 0; k + 1 < kNumSteps; ++k) {
    const double spread = rel(numeric[k], numeric[k + 1]);
    if (spread < best_spread) {
      best_spread = spread;
      best = k;
    }
  }
  std::vector<double> a(entries.size());
  double na = 0.0;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    a[e] = analytic[entries[e]];
    na += a[e] * a[e];
  }
  GradCheck out;
  out.step = kSteps[best];
  out.checked = entries.size();
  out.rel_error = rel(a, numeric[best]);
  out.analytic_norm = std::sqrt(na);
  return out;
}

inline bool gradient_ok(const GradCheck& g, double tol) {
  return g.checked > 0 && g.rel_error < tol;
}

}  // namespace secoco::testing

#endif  // SECOCO_TESTS_SUPPORT_HPP_

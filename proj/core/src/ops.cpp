#include "secoco/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "secoco/common.hpp"

namespace secoco::numerics {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

std::string shapes(const Var& a, const Var& b) {
  return shape_string(a->value.shape()) + " vs " + shape_string(b->value.shape());
}

Shape with_cols(const Shape& s, int cols) {
  Shape out = s;
  out.back() = cols;
  return out;
}

bool wants(const Var& v) { return v && v->requires_grad; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0),
          "matmul shape mismatch: " + shapes(a, b));
  const int n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  Tensor out(Shape{n, m});
  gemm(false, false, n, m, k, 1.0f, av.data(), bv.data(), 0.0f, out.data());
  return make_node(std::move(out), {a, b}, [n, k, m](Node& self) {
    const Var& a = self.inputs[0];
    const Var& b = self.inputs[1];
    if (wants(a)) {
      gemm(false, true, n, k, m, 1.0f, self.grad.data(), b->value.data(), 1.0f,
           a->ensure_grad().data());
    }
    if (wants(b)) {
      gemm(true, false, k, m, n, 1.0f, a->value.data(), self.grad.data(), 1.0f,
           b->ensure_grad().data());
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  require(wv.rank() == 2 && xv.cols() == wv.dim(0),
          "linear shape mismatch: " + shapes(x, w));
  const int n = xv.rows(), in = wv.dim(0), outd = wv.dim(1);
  if (bias) {
    require(static_cast<int>(bias->value.numel()) == outd, "linear bias size mismatch");
  }
  Tensor out(with_cols(xv.shape(), outd));
  if (bias) {
    for (int r = 0; r < n; ++r) std::copy_n(bias->value.data(), outd, out.row(r));
  }
  gemm(false, false, n, outd, in, 1.0f, xv.data(), wv.data(), bias ? 1.0f : 0.0f,
       out.data());
  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(bias);
  return make_node(std::move(out), std::move(inputs), [n, in, outd](Node& self) {
    const Var& x = self.inputs[0];
    const Var& w = self.inputs[1];
    const float* g = self.grad.data();
    if (wants(x)) {
      gemm(false, true, n, in, outd, 1.0f, g, w->value.data(), 1.0f,
           x->ensure_grad().data());
    }
    if (wants(w)) {
      gemm(true, false, in, outd, n, 1.0f, x->value.data(), g, 1.0f,
           w->ensure_grad().data());
    }
    if (self.inputs.size() > 2 && wants(self.inputs[2])) {
      float* gb = self.inputs[2]->ensure_grad().data();
      for (int r = 0; r < n; ++r) {
        const float* gr = g + static_cast<std::size_t>(r) * outd;
        for (int c = 0; c < outd; ++c) gb[c] += gr[c];
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(a->value.numel() == b->value.numel(), "add shape mismatch: " + shapes(a, b));
  Tensor out = a->value;
  const float* bv = b->value.data();
  float* o = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) o[i] += bv[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const float* g = self.grad.data();
    for (const Var& in : self.inputs) {
      if (!wants(in)) continue;
      float* gi = in->ensure_grad().data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) gi[i] += g[i];
    }
  });
}

Var scale(const Var& a, float s) {
  Tensor out = a->value;
  for (float& v : out.values()) v *= s;
  return make_node(std::move(out), {a}, [s](Node& self) {
    const Var& a = self.inputs[0];
    float* ga = a->ensure_grad().data();
    const float* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) ga[i] += s * g[i];
  });
}

Var concat_cols(const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  require(av.rows() == bv.rows(), "concat_cols row mismatch: " + shapes(a, b));
  const int n = av.rows(), p = av.cols(), q = bv.cols();
  Tensor out(Shape{n, p + q});
  for (int r = 0; r < n; ++r) {
    std::copy_n(av.row(r), p, out.row(r));
    std::copy_n(bv.row(r), q, out.row(r) + p);
  }
  return make_node(std::move(out), {a, b}, [n, p, q](Node& self) {
    const Var& a = self.inputs[0];
    const Var& b = self.inputs[1];
    for (int r = 0; r < n; ++r) {
      const float* g = self.grad.row(r);
      if (wants(a)) {
        float* ga = a->ensure_grad().row(r);
        for (int c = 0; c < p; ++c) ga[c] += g[c];
      }
      if (wants(b)) {
        float* gb = b->ensure_grad().row(r);
        for (int c = 0; c < q; ++c) gb[c] += g[p + c];
      }
    }
  });
}

Var embedding(const Var& table, std::span<const int> ids) {
  const Tensor& tv = table->value;
  require(tv.rank() == 2, "embedding table must be 2-D");
  const int d = tv.cols();
  Tensor out(Shape{static_cast<int>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < tv.dim(0),
            "embedding id out of range: " + std::to_string(ids[i]));
    std::copy_n(tv.row(ids[i]), d, out.row(static_cast<int>(i)));
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return make_node(std::move(out), {table}, [saved = std::move(saved), d](Node& self) {
    Tensor& gt = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      const float* g = self.grad.row(static_cast<int>(i));
      float* dst = gt.row(saved[i]);
      for (int c = 0; c < d; ++c) dst[c] += g[c];
    }
  });
}

Var gather_rows(const Var& x, std::span<const int> rows) {
  const Tensor& xv = x->value;
  const int d = xv.cols();
  Tensor out(Shape{static_cast<int>(rows.size()), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < xv.rows(),
            "gather row out of range: " + std::to_string(rows[i]));
    std::copy_n(xv.row(rows[i]), d, out.row(static_cast<int>(i)));
  }
  std::vector<int> saved(rows.begin(), rows.end());
  return make_node(std::move(out), {x}, [saved = std::move(saved), d](Node& self) {
    Tensor& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      const float* g = self.grad.row(static_cast<int>(i));
      float* dst = gx.row(saved[i]);
      for (int c = 0; c < d; ++c) dst[c] += g[c];
    }
  });
}

namespace {
thread_local ReluPatternScope* relu_scope = nullptr;
}  // namespace

ReluPatternScope::ReluPatternScope() : previous_(relu_scope) { relu_scope = this; }

ReluPatternScope::ReluPatternScope(std::vector<bool> pinned)
    : pattern_(std::move(pinned)), pinned_(true), previous_(relu_scope) {
  relu_scope = this;
}

ReluPatternScope::~ReluPatternScope() { relu_scope = previous_; }

bool ReluPatternScope::gate(float input) {
  if (!pinned_) {
    pattern_.push_back(input > 0.0f);
    return input > 0.0f;
  }
  if (next_ >= pattern_.size()) throw ContractError("pinned relu pattern exhausted");
  return pattern_[next_++];
}

Var relu(const Var& x) {
  Tensor out = x->value;
  std::vector<std::uint8_t> gates(out.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const float v = out[i];
    gates[i] = relu_scope != nullptr ? relu_scope->gate(v) : v > 0.0f;
    if (!gates[i]) out[i] = 0.0f;
  }
  return make_node(std::move(out), {x}, [gates = std::move(gates)](Node& self) {
    float* gx = self.inputs[0]->ensure_grad().data();
    const float* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      if (gates[i]) gx[i] += g[i];
    }
  });
}

namespace {
float stable_sigmoid(float z) {
  if (z >= 0.0f) return 1.0f / (1.0f + std::exp(-z));
  const float e = std::exp(z);
  return e / (1.0f + e);
}
}  // namespace

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (float& v : out.values()) v = stable_sigmoid(v);
  return make_node(std::move(out), {x}, [](Node& self) {
    float* gx = self.inputs[0]->ensure_grad().data();
    const float* y = self.value.data();
    const float* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      gx[i] += g[i] * y[i] * (1.0f - y[i]);
    }
  });
}

namespace {
void softmax_row(const float* in, float* out, int n) {
  float mx = -std::numeric_limits<float>::infinity();
  for (int i = 0; i < n; ++i) mx = std::max(mx, in[i]);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    total += out[i];
  }
  const float inv = static_cast<float>(1.0 / total);
  for (int i = 0; i < n; ++i) out[i] *= inv;
}
}  // namespace

Var softmax_rows(const Var& x) {
  const Tensor& xv = x->value;
  Tensor out(xv.shape());
  const int n = xv.rows(), c = xv.cols();
  for (int r = 0; r < n; ++r) softmax_row(xv.row(r), out.row(r), c);
  return make_node(std::move(out), {x}, [n, c](Node& self) {
    Tensor& gx = self.inputs[0]->ensure_grad();
    for (int r = 0; r < n; ++r) {
      const float* y = self.value.row(r);
      const float* g = self.grad.row(r);
      double dot = 0.0;
      for (int i = 0; i < c; ++i) dot += static_cast<double>(g[i]) * y[i];
      float* dst = gx.row(r);
      for (int i = 0; i < c; ++i) dst[i] += y[i] * (g[i] - static_cast<float>(dot));
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
  const Tensor& xv = x->value;
  const int n = xv.rows(), d = xv.cols();
  require(static_cast<int>(gamma->value.numel()) == d &&
              static_cast<int>(beta->value.numel()) == d,
          "layer_norm parameter size mismatch");
  Tensor out(xv.shape());
  // Normalized activations and inverse std, kept for the backward pass.
  auto xhat = std::make_shared<std::vector<float>>(xv.numel());
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<std::size_t>(n));
  const float* g = gamma->value.data();
  const float* b = beta->value.data();
  for (int r = 0; r < n; ++r) {
    const float* xr = xv.row(r);
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += xr[i];
    mean /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) {
      const double z = xr[i] - mean;
      var += z * z;
    }
    var /= d;
    const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*inv_std)[static_cast<std::size_t>(r)] = is;
    float* xh = xhat->data() + static_cast<std::size_t>(r) * d;
    float* o = out.row(r);
    for (int i = 0; i < d; ++i) {
      xh[i] = (xr[i] - static_cast<float>(mean)) * is;
      o[i] = xh[i] * g[i] + b[i];
    }
  }
  return make_node(std::move(out), {x, gamma, beta}, [n, d, xhat, inv_std](Node& self) {
    const Var& x = self.inputs[0];
    const Var& gamma = self.inputs[1];
    const Var& beta = self.inputs[2];
    const float* gm = gamma->value.data();
    float* ggam = wants(gamma) ? gamma->ensure_grad().data() : nullptr;
    float* gbet = wants(beta) ? beta->ensure_grad().data() : nullptr;
    float* gx = wants(x) ? x->ensure_grad().data() : nullptr;
    std::vector<float> gy(static_cast<std::size_t>(d));
    for (int r = 0; r < n; ++r) {
      const float* g = self.grad.row(r);
      const float* xh = xhat->data() + static_cast<std::size_t>(r) * d;
      double mean_gy = 0.0, mean_gy_xh = 0.0;
      for (int i = 0; i < d; ++i) {
        if (ggam) ggam[i] += g[i] * xh[i];
        if (gbet) gbet[i] += g[i];
        gy[static_cast<std::size_t>(i)] = g[i] * gm[i];
        mean_gy += gy[static_cast<std::size_t>(i)];
        mean_gy_xh += static_cast<double>(gy[static_cast<std::size_t>(i)]) * xh[i];
      }
      if (!gx) continue;
      const float m1 = static_cast<float>(mean_gy / d);
      const float m2 = static_cast<float>(mean_gy_xh / d);
      const float is = (*inv_std)[static_cast<std::size_t>(r)];
      float* dst = gx + static_cast<std::size_t>(r) * d;
      for (int i = 0; i < d; ++i) {
        dst[i] += is * (gy[static_cast<std::size_t>(i)] - m1 - xh[i] * m2);
      }
    }
  });
}

Var dropout(const Var& x, float p, std::mt19937_64& rng) {
  if (p <= 0.0f) return x;
  require(p < 1.0f, "dropout probability must be < 1");
  const float keep_scale = 1.0f / (1.0f - p);
  auto mask = std::make_shared<std::vector<float>>(x->value.numel());
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const float m = u(rng) >= p ? keep_scale : 0.0f;
    (*mask)[i] = m;
    out[i] *= m;
  }
  return make_node(std::move(out), {x}, [mask](Node& self) {
    float* gx = self.inputs[0]->ensure_grad().data();
    const float* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (float v : x->value.values()) total += v;
  return make_node(Tensor::scalar(static_cast<float>(total)), {x}, [](Node& self) {
    const float g = self.grad[0];
    for (float& v : self.inputs[0]->ensure_grad().values()) v += g;
  });
}

Var add_scalars(std::span<const Var> terms) {
  require(!terms.empty(), "add_scalars needs at least one term");
  double total = 0.0;
  for (const auto& t : terms) {
    require(t->value.numel() == 1, "add_scalars expects scalars");
    total += t->value[0];
  }
  return make_node(Tensor::scalar(static_cast<float>(total)),
                   std::vector<Var>(terms.begin(), terms.end()), [](Node& self) {
                     for (const Var& in : self.inputs) {
                       if (wants(in)) in->ensure_grad()[0] += self.grad[0];
                     }
                   });
}

Var cross_entropy(const Var& logits, std::span<const int> targets, int ignore_index) {
  const Tensor& lv = logits->value;
  const int n = lv.rows(), c = lv.cols();
  require(static_cast<int>(targets.size()) == n,
          "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
              std::to_string(n) + " rows");
  auto probs = std::make_shared<Tensor>(lv.shape());
  double total = 0.0;
  int count = 0;
  for (int r = 0; r < n; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t == ignore_index) continue;
    require(t >= 0 && t < c, "cross_entropy target out of range: " + std::to_string(t));
    const float* row = lv.row(r);
    softmax_row(row, probs->row(r), c);
    float mx = -std::numeric_limits<float>::infinity();
    for (int i = 0; i < c; ++i) mx = std::max(mx, row[i]);
    double z = 0.0;
    for (int i = 0; i < c; ++i) z += std::exp(static_cast<double>(row[i] - mx));
    total += std::log(z) + mx - row[t];
    ++count;
  }
  const float loss = count ? static_cast<float>(total / count) : 0.0f;
  std::vector<int> saved(targets.begin(), targets.end());
  if (count == 0) return constant(Tensor::scalar(0.0f));
  return make_node(Tensor::scalar(loss), {logits},
                   [probs, saved = std::move(saved), n, c, count, ignore_index](Node& self) {
                     Tensor& gl = self.inputs[0]->ensure_grad();
                     const float s = self.grad[0] / static_cast<float>(count);
                     for (int r = 0; r < n; ++r) {
                       const int t = saved[static_cast<std::size_t>(r)];
                       if (t == ignore_index) continue;
                       const float* p = probs->row(r);
                       float* dst = gl.row(r);
                       for (int i = 0; i < c; ++i) dst[i] += s * p[i];
                       dst[t] -= s;
                     }
                   });
}

Var bce_with_logits(const Var& logits, std::span<const float> targets,
                    std::span<const std::uint8_t> use) {
  const Tensor& lv = logits->value;
  const int n = static_cast<int>(lv.numel());
  require(static_cast<int>(targets.size()) == n && static_cast<int>(use.size()) == n,
          "bce_with_logits: target/mask size mismatch");
  double total = 0.0;
  int count = 0;
  for (int i = 0; i < n; ++i) {
    if (!use[static_cast<std::size_t>(i)]) continue;
    const double z = lv[static_cast<std::size_t>(i)];
    const double t = targets[static_cast<std::size_t>(i)];
    total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    ++count;
  }
  if (count == 0) return constant(Tensor::scalar(0.0f));
  std::vector<float> tg(targets.begin(), targets.end());
  std::vector<std::uint8_t> us(use.begin(), use.end());
  return make_node(Tensor::scalar(static_cast<float>(total / count)), {logits},
                   [tg = std::move(tg), us = std::move(us), count](Node& self) {
                     const Var& l = self.inputs[0];
                     float* gl = l->ensure_grad().data();
                     const float s = self.grad[0] / static_cast<float>(count);
                     for (std::size_t i = 0; i < tg.size(); ++i) {
                       if (!us[i]) continue;
                       gl[i] += s * (stable_sigmoid(l->value[i]) - tg[i]);
                     }
                   });
}

Var attention(const Var& q, const Var& k, const Var& v, AttentionShape shape,
              std::span<const std::uint8_t> key_valid, bool causal) {
  const int B = shape.batch, Lq = shape.q_len, Lk = shape.k_len, H = shape.heads;
  const Tensor& qv = q->value;
  const Tensor& kv = k->value;
  const Tensor& vv = v->value;
  const int D = qv.cols();
  require(H > 0 && D % H == 0, "attention: model dim not divisible by heads");
  require(qv.rows() == B * Lq && kv.rows() == B * Lk && vv.rows() == B * Lk &&
              kv.cols() == D && vv.cols() == D,
          "attention: q/k/v shapes do not match the attention shape");
  require(static_cast<int>(key_valid.size()) == B * Lk, "attention: key mask size mismatch");
  const int dh = D / H;
  const float sc = 1.0f / std::sqrt(static_cast<float>(dh));

  // Attention weights [B, H, Lq, Lk] saved for the backward pass.
  auto probs = std::make_shared<std::vector<float>>(
      static_cast<std::size_t>(B) * H * Lq * Lk, 0.0f);
  Tensor out(Shape{B * Lq, D}, 0.0f);
  std::vector<float> scores(static_cast<std::size_t>(Lk));
  for (int b = 0; b < B; ++b) {
    const std::uint8_t* valid = key_valid.data() + static_cast<std::size_t>(b) * Lk;
    for (int h = 0; h < H; ++h) {
      const int off = h * dh;
      for (int i = 0; i < Lq; ++i) {
        const float* qi = qv.row(b * Lq + i) + off;
        float mx = -std::numeric_limits<float>::infinity();
        for (int j = 0; j < Lk; ++j) {
          float s = -std::numeric_limits<float>::infinity();
          if (valid[j] && !(causal && j > i)) {
            const float* kj = kv.row(b * Lk + j) + off;
            float dot = 0.0f;
            for (int t = 0; t < dh; ++t) dot += qi[t] * kj[t];
            s = dot * sc;
          }
          scores[static_cast<std::size_t>(j)] = s;
          mx = std::max(mx, s);
        }
        if (mx == -std::numeric_limits<float>::infinity()) continue;
        float* p = probs->data() + ((static_cast<std::size_t>(b) * H + h) * Lq + i) * Lk;
        double total = 0.0;
        for (int j = 0; j < Lk; ++j) {
          const float s = scores[static_cast<std::size_t>(j)];
          p[j] = s == -std::numeric_limits<float>::infinity() ? 0.0f : std::exp(s - mx);
          total += p[j];
        }
        const float inv = static_cast<float>(1.0 / total);
        float* oi = out.row(b * Lq + i) + off;
        for (int j = 0; j < Lk; ++j) {
          p[j] *= inv;
          if (p[j] == 0.0f) continue;
          const float* vj = vv.row(b * Lk + j) + off;
          for (int t = 0; t < dh; ++t) oi[t] += p[j] * vj[t];
        }
      }
    }
  }

  return make_node(std::move(out), {q, k, v}, [probs, B, Lq, Lk, H, dh, sc](Node& self) {
    const Var& q = self.inputs[0];
    const Var& k = self.inputs[1];
    const Var& v = self.inputs[2];
    Tensor& gq = q->ensure_grad();
    Tensor& gk = k->ensure_grad();
    Tensor& gv = v->ensure_grad();
    const bool need_q = wants(q), need_k = wants(k), need_v = wants(v);
    std::vector<float> dp(static_cast<std::size_t>(Lk));
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        const int off = h * dh;
        for (int i = 0; i < Lq; ++i) {
          const float* p = probs->data() + ((static_cast<std::size_t>(b) * H + h) * Lq + i) * Lk;
          const float* go = self.grad.row(b * Lq + i) + off;
          double dot = 0.0;
          for (int j = 0; j < Lk; ++j) {
            float d = 0.0f;
            if (p[j] != 0.0f) {
              const float* vj = v->value.row(b * Lk + j) + off;
              for (int t = 0; t < dh; ++t) d += go[t] * vj[t];
              if (need_v) {
                float* gvj = gv.row(b * Lk + j) + off;
                for (int t = 0; t < dh; ++t) gvj[t] += p[j] * go[t];
              }
            }
            dp[static_cast<std::size_t>(j)] = d;
            dot += static_cast<double>(p[j]) * d;
          }
          const float* qi = q->value.row(b * Lq + i) + off;
          float* gqi = gq.row(b * Lq + i) + off;
          for (int j = 0; j < Lk; ++j) {
            if (p[j] == 0.0f) continue;
            const float ds = p[j] * (dp[static_cast<std::size_t>(j)] - static_cast<float>(dot)) * sc;
            const float* kj = k->value.row(b * Lk + j) + off;
            if (need_q) {
              for (int t = 0; t < dh; ++t) gqi[t] += ds * kj[t];
            }
            if (need_k) {
              float* gkj = gk.row(b * Lk + j) + off;
              for (int t = 0; t < dh; ++t) gkj[t] += ds * qi[t];
            }
          }
        }
      }
    }
  });
}

}  // namespace secoco::numerics

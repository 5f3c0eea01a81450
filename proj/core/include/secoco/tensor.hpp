#ifndef SECOCO_TENSOR_HPP_
#define SECOCO_TENSOR_HPP_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace secoco::numerics {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major f32 array. Operations view a tensor of any rank as a
// matrix of rows() x cols(), cols() being the last dimension.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  int cols() const { return shape_.empty() ? 0 : shape_.back(); }
  int rows() const { return cols() == 0 ? 0 : static_cast<int>(numel() / cols()); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols(); }
  const float* row(int r) const {
    return data_.data() + static_cast<std::size_t>(r) * cols();
  }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float item() const;

  void reshape(Shape shape);
  void fill(float v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

// C = alpha * op(A) * op(B) + beta * C with row-major storage; op(A) is
// m x k and op(B) is k x n. The one matmul kernel every op routes through.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, const float* b, float beta, float* c);

}  // namespace secoco::numerics

#endif  // SECOCO_TENSOR_HPP_

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ssgan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One value in the dynamic computation graph. Leaves have no parents and
// keep their gradient across backward passes until zero_grad().
struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(std::span<const float> g);
  std::vector<float>& grad_buffer();
};

}  // namespace detail

// Dense float32 row-major array with an optional gradient slot.
//
// Tensor is a handle: copies share storage and graph position, like a
// framework tensor. Use clone() for an independent deep copy and detach()
// to cut the graph.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor scalar(float value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  bool empty() const { return node_ == nullptr; }

  std::span<float> data();
  std::span<const float> data() const;
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<float> grad();
  std::span<const float> grad() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;
  Tensor reshape(Shape shape) const;

  // Reverse-mode sweep from this scalar. Gradients of leaves accumulate;
  // the recorded graph behind this tensor is released afterwards.
  void backward();

  // Internal: used by op implementations.
  static Tensor from_node(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Builds the result node of an op: sets requires_grad from the inputs and
// installs the backward closure only when some input needs a gradient.
Tensor make_result(Shape shape, std::vector<float> values,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn);

// True when every value is finite.
bool all_finite(std::span<const float> values);

// ---------------------------------------------------------------- ops

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor add_scalar(const Tensor& a, float offset);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[n,in] * w[out,in]^T + b[out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
// x[n,c,h,w] + b[c]
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

Tensor leaky_relu(const Tensor& x, float slope);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Cross-correlation. input is [Cin,H,W] or [N,Cin,H,W]; kernels are
// [Cout,Cin,kh,kw]. Output keeps the input's rank.
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int pad);
// Adjoint of conv2d. kernels are [Cin,Cout,kh,kw].
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernels, int stride,
                        int pad);

std::size_t conv_output_size(std::size_t in, std::size_t kernel, int stride,
                             int pad);
std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel,
                                       int stride, int pad);

// Concatenate [n,ca,h,w] and [n,cb,h,w] along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);

struct BatchStats {
  std::vector<float> mean;
  std::vector<float> var;
};

// Normalizes [n,c,h,w] per channel with batch statistics. When stats_out is
// non-null it receives the (biased) batch mean/variance.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma,
                        const Tensor& beta, float eps,
                        BatchStats* stats_out = nullptr);
// Normalizes with fixed statistics.
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, const BatchStats& stats, float eps);

// mean |a - b|
Tensor l1_loss(const Tensor& a, const Tensor& b);
// mean(-log(max(p, floor)))
Tensor neg_log_mean(const Tensor& p, float floor);
// mean(-log(max(1 - p, floor)))
Tensor neg_log1m_mean(const Tensor& p, float floor);
// Mean binary cross-entropy between sigmoid(logits) and targets, computed
// in the numerically stable logit form.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

}  // namespace ssgan

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dw::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& s);
std::string shape_string(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
};

/// Shared handle to a dense row-major tensor. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t size() const { return impl_->value.size(); }
  bool requires_grad() const { return impl_->requires_grad; }

  std::span<double> values() { return impl_->value; }
  std::span<const double> values() const { return impl_->value; }
  double item() const;

  /// Allocated on first use; zeros until backward writes into it. Handles
  /// are shallow, so the gradient is writable through a const handle.
  std::span<double> grad() const;
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  /// Deep copy of values; gradient and tape history are not copied.
  Tensor clone(bool requires_grad = false) const;

  TensorData* data() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorData> impl_;
};

/// Records operations in creation order, which is a topological order of the
/// graph. backward() replays them in reverse exactly once.
class Tape {
 public:
  /// Registers `out` as produced from `inputs`; `backward` reads out's grad
  /// and accumulates into the inputs' grads.
  void record(const Tensor& out, std::vector<Tensor> inputs, std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws std::domain_error for a
  /// non-scalar loss and std::logic_error when called twice without reset().
  void backward(const Tensor& loss);

  void reset();
  std::size_t size() const { return nodes_.size(); }
  std::size_t last_backward_visits() const { return visits_; }

 private:
  struct Node {
    Tensor output;
    std::vector<Tensor> inputs;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
  std::size_t visits_ = 0;
};

// Elementwise ops require identical shapes.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double s);
Tensor silu(Tape& tape, const Tensor& a);

/// [m, k] x [k, n] -> [m, n].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// x: [N, C, H, W], w: [O, C, k, k] with odd k, bias: [O] or undefined.
/// Stride 1, zero "same" padding.
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);

/// Concatenation of [N, C_i, H, W] tensors along the channel axis.
Tensor concat(Tape& tape, const std::vector<Tensor>& xs);

/// [N, 1, H, W] -> [N, C, H, W] by repetition.
Tensor expand_channels(Tape& tape, const Tensor& x, int channels);

Tensor reshape(Tape& tape, const Tensor& x, const Shape& shape);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

/// Softmax attention along the frame axis, independently per pixel. Inputs
/// are [B * T, C, H, W]; each consecutive block of T frames attends to itself.
Tensor frame_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v, int frames);

/// Full-width temporal mixing: out[b, t] = sum_s w[t, s] * x[b, s] with
/// x: [B * T, C, H, W] and w: [T, T].
Tensor frame_mix(Tape& tape, const Tensor& x, const Tensor& w, int frames);

/// Adaptive-moment optimizer over flat parameter buffers.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options opts) : opts_(opts) {}

  /// Registers a buffer of `size` parameters; returns its slot id.
  std::size_t add_slot(std::size_t size);
  /// Advances the step counter; call once per optimizer step.
  void begin_step() { ++t_; }
  void update(std::size_t slot, std::span<double> params, std::span<const double> grads);
  long step_count() const { return t_; }
  const Options& options() const { return opts_; }

 private:
  Options opts_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace dw::ad

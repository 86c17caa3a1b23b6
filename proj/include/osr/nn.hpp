#pragma once

#include "osr/rng.hpp"
#include "osr/tensor.hpp"

#include <string>
#include <vector>

namespace osr::nn {

/// A named parameter tensor with its gradient accumulator. Buffers
/// (trainable = false) are persisted in checkpoints but never optimized:
/// batch-norm running statistics are the only instance.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> shape, bool train = true)
      : name(std::move(n)), value(shape), grad(std::move(shape)), trainable(train) {}

  void zero_grad() { grad.fill(0.0); }
};

enum class Init { kHe, kXavier, kSmall, kZero };

void init_tensor(Tensor& t, Init kind, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// 2-D convolution over NHWC tensors, square kernel, zero padding
/// (k-1)/2 so stride 1 preserves the spatial size and stride 2 halves it.
class Conv2d {
 public:
  Conv2d(const std::string& name, int in_ch, int out_ch, int ksize, int stride, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void params(std::vector<Param*>& out);

  int out_extent(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }
  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

 private:
  Tensor im2col(const Tensor& x) const;

  int in_ch_, out_ch_, k_, stride_, pad_;
  Param weight_;  // shape {k, k, in_ch, out_ch}; flattened it is the (k*k*in_ch) x out_ch matrix
  Param bias_;    // {out_ch}
  Tensor x_cache_;
};

class Linear {
 public:
  Linear(const std::string& name, int in, int out, Rng& rng, Init init = Init::kHe,
         bool with_bias = true);

  /// Input of any rank with trailing dimension `in`; treated as a row batch.
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void params(std::vector<Param*>& out);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  int in_, out_;
  bool with_bias_;
  Param weight_;  // {in, out}
  Param bias_;    // {out}
  Tensor x_cache_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor x_cache_;
};

/// Exact GELU, x/2 * (1 + erf(x/sqrt(2))). Smooth everywhere, which keeps
/// finite-difference gradient checks clean.
class Gelu {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor x_cache_;
};

class Sigmoid {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor y_cache_;
};

/// Normalizes the trailing dimension.
class LayerNorm {
 public:
  LayerNorm(const std::string& name, int dim);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void params(std::vector<Param*>& out);

 private:
  int dim_;
  double eps_ = 1e-6;
  Param gamma_, beta_;
  Tensor xhat_cache_;
  std::vector<double> inv_std_cache_;
};

/// Batch normalization over (N, H, W) per channel, NHWC layout.
class BatchNorm2d {
 public:
  BatchNorm2d(const std::string& name, int channels);

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);
  void params(std::vector<Param*>& out);

 private:
  int ch_;
  double eps_ = 1e-5;
  double momentum_ = 0.1;
  Param gamma_, beta_;
  Param running_mean_, running_var_;  // buffers
  Tensor xhat_cache_;
  std::vector<double> inv_std_cache_;
  bool training_cache_ = false;
};

/// Row-wise softmax on the trailing dimension (max-shifted).
Tensor softmax_rows(const Tensor& x);
/// Backward of softmax given its output y and upstream dy.
Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy);

class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention(const std::string& name, int dim, int heads, Rng& rng);

  Tensor forward(const Tensor& x);  // (N, T, D) -> (N, T, D)
  Tensor backward(const Tensor& dy);
  void params(std::vector<Param*>& out);

 private:
  int dim_, heads_, head_dim_;
  Linear qkv_;
  Linear out_;
  Tensor qkv_cache_;    // (N, T, 3D)
  Tensor probs_cache_;  // (N, heads, T, T)
};

/// Pre-LN transformer block: x + MHA(LN(x)), then x + MLP(LN(x)).
class TransformerBlock {
 public:
  TransformerBlock(const std::string& name, int dim, int heads, double mlp_ratio, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void params(std::vector<Param*>& out);

 private:
  LayerNorm ln1_;
  MultiHeadSelfAttention attn_;
  LayerNorm ln2_;
  Linear fc1_;
  Gelu act_;
  Linear fc2_;
};

}  // namespace osr::nn

#include "osr/nn.hpp"

#include "osr/errors.hpp"

#include <cmath>
#include <cstring>

namespace osr::nn {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void add_inplace(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace

void init_tensor(Tensor& t, Init kind, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  switch (kind) {
    case Init::kHe: {
      const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, s);
      break;
    }
    case Init::kXavier: {
      const double s = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, s);
      break;
    }
    case Init::kSmall:
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, 0.01);
      break;
    case Init::kZero:
      t.fill(0.0);
      break;
  }
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(const std::string& name, int in_ch, int out_ch, int ksize, int stride, Rng& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(ksize),
      stride_(stride),
      pad_((ksize - 1) / 2),
      weight_(name + ".weight",
              {static_cast<std::size_t>(ksize), static_cast<std::size_t>(ksize),
               static_cast<std::size_t>(in_ch), static_cast<std::size_t>(out_ch)}),
      bias_(name + ".bias", {static_cast<std::size_t>(out_ch)}) {
  init_tensor(weight_.value, Init::kHe,
              static_cast<std::size_t>(ksize) * ksize * in_ch, static_cast<std::size_t>(out_ch),
              rng);
}

Tensor Conv2d::im2col(const Tensor& x) const {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t ho = static_cast<std::size_t>(out_extent(static_cast<int>(h)));
  const std::size_t wo = static_cast<std::size_t>(out_extent(static_cast<int>(w)));
  const std::size_t patch = static_cast<std::size_t>(k_) * k_ * c;
  Tensor col({n * ho * wo, patch});
  const double* src = x.data();
  double* dst = col.data();
  for (std::size_t in = 0; in < n; ++in) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double* row = dst + ((in * ho + oy) * wo + ox) * patch;
        for (int ky = 0; ky < k_; ++ky) {
          const long iy = static_cast<long>(oy) * stride_ - pad_ + ky;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (int kx = 0; kx < k_; ++kx) {
            const long ix = static_cast<long>(ox) * stride_ - pad_ + kx;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            std::memcpy(row + (static_cast<std::size_t>(ky) * k_ + kx) * c,
                        src + ((in * h + iy) * w + ix) * c, c * sizeof(double));
          }
        }
      }
    }
  }
  return col;
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.rank() != 4 || x.dim(3) != static_cast<std::size_t>(in_ch_)) {
    throw ConfigError("Conv2d " + weight_.name + ": input shape " + x.shape_str() +
                      " does not match in_channels=" + std::to_string(in_ch_));
  }
  x_cache_ = x;
  const std::size_t n = x.dim(0);
  const std::size_t ho = static_cast<std::size_t>(out_extent(static_cast<int>(x.dim(1))));
  const std::size_t wo = static_cast<std::size_t>(out_extent(static_cast<int>(x.dim(2))));
  const std::size_t rows = n * ho * wo;
  const std::size_t patch = static_cast<std::size_t>(k_) * k_ * in_ch_;

  Tensor col = im2col(x);
  Tensor y({n, ho, wo, static_cast<std::size_t>(out_ch_)});
  matmul(col.data(), weight_.value.data(), y.data(), rows, patch,
         static_cast<std::size_t>(out_ch_));
  double* yd = y.data();
  const double* b = bias_.value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = yd + r * out_ch_;
    for (int c = 0; c < out_ch_; ++c) yr[c] += b[c];
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const Tensor& x = x_cache_;
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t ho = dy.dim(1), wo = dy.dim(2);
  const std::size_t rows = n * ho * wo;
  const std::size_t patch = static_cast<std::size_t>(k_) * k_ * in_ch_;

  const double* dyd = dy.data();
  double* db = bias_.grad.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = dyd + r * out_ch_;
    for (int oc = 0; oc < out_ch_; ++oc) db[oc] += row[oc];
  }

  Tensor col = im2col(x);
  matmul(col.data(), dy.data(), weight_.grad.data(), patch, rows,
         static_cast<std::size_t>(out_ch_), /*trans_a=*/true, /*trans_b=*/false,
         /*accumulate=*/true);

  Tensor dcol({rows, patch});
  matmul(dy.data(), weight_.value.data(), dcol.data(), rows,
         static_cast<std::size_t>(out_ch_), patch, /*trans_a=*/false, /*trans_b=*/true);

  // col2im scatter-add.
  Tensor dx({n, h, w, c});
  double* dxd = dx.data();
  const double* dc = dcol.data();
  for (std::size_t in = 0; in < n; ++in) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const double* row = dc + ((in * ho + oy) * wo + ox) * patch;
        for (int ky = 0; ky < k_; ++ky) {
          const long iy = static_cast<long>(oy) * stride_ - pad_ + ky;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (int kx = 0; kx < k_; ++kx) {
            const long ix = static_cast<long>(ox) * stride_ - pad_ + kx;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            double* d = dxd + ((in * h + iy) * w + ix) * c;
            const double* s = row + (static_cast<std::size_t>(ky) * k_ + kx) * c;
            for (std::size_t ch = 0; ch < c; ++ch) d[ch] += s[ch];
          }
        }
      }
    }
  }
  return dx;
}

void Conv2d::params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(const std::string& name, int in, int out, Rng& rng, Init init, bool with_bias)
    : in_(in),
      out_(out),
      with_bias_(with_bias),
      weight_(name + ".weight", {static_cast<std::size_t>(in), static_cast<std::size_t>(out)}),
      bias_(name + ".bias", {static_cast<std::size_t>(out)}) {
  init_tensor(weight_.value, init, static_cast<std::size_t>(in), static_cast<std::size_t>(out),
              rng);
}

Tensor Linear::forward(const Tensor& x) {
  if (x.shape().back() != static_cast<std::size_t>(in_)) {
    throw ConfigError("Linear " + weight_.name + ": input shape " + x.shape_str() +
                      " does not match in=" + std::to_string(in_));
  }
  x_cache_ = x;
  const std::size_t rows = x.size() / in_;
  std::vector<std::size_t> yshape = x.shape();
  yshape.back() = static_cast<std::size_t>(out_);
  Tensor y(yshape);
  matmul(x.data(), weight_.value.data(), y.data(), rows, static_cast<std::size_t>(in_),
         static_cast<std::size_t>(out_));
  if (with_bias_) {
    double* yd = y.data();
    const double* b = bias_.value.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double* yr = yd + r * out_;
      for (int c = 0; c < out_; ++c) yr[c] += b[c];
    }
  }
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  const std::size_t rows = dy.size() / out_;
  if (with_bias_) {
    const double* dyd = dy.data();
    double* db = bias_.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = dyd + r * out_;
      for (int c = 0; c < out_; ++c) db[c] += row[c];
    }
  }
  matmul(x_cache_.data(), dy.data(), weight_.grad.data(), static_cast<std::size_t>(in_), rows,
         static_cast<std::size_t>(out_), /*trans_a=*/true, /*trans_b=*/false, /*accumulate=*/true);
  Tensor dx(x_cache_.shape());
  matmul(dy.data(), weight_.value.data(), dx.data(), rows, static_cast<std::size_t>(out_),
         static_cast<std::size_t>(in_), /*trans_a=*/false, /*trans_b=*/true);
  return dx;
}

void Linear::params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (with_bias_) out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// Activations

Tensor ReLU::forward(const Tensor& x) {
  x_cache_ = x;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor ReLU::backward(const Tensor& dy) const {
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x_cache_[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

Tensor Gelu::forward(const Tensor& x) {
  x_cache_ = x;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
  }
  return y;
}

Tensor Gelu::backward(const Tensor& dy) const {
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const double x = x_cache_[i];
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    dx[i] = dy[i] * (cdf + x * pdf);
  }
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  y_cache_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& dy) const {
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    dx[i] = dy[i] * y_cache_[i] * (1.0 - y_cache_[i]);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// LayerNorm

LayerNorm::LayerNorm(const std::string& name, int dim)
    : dim_(dim),
      gamma_(name + ".gamma", {static_cast<std::size_t>(dim)}),
      beta_(name + ".beta", {static_cast<std::size_t>(dim)}) {
  gamma_.value.fill(1.0);
}

Tensor LayerNorm::forward(const Tensor& x) {
  const std::size_t rows = x.size() / dim_;
  Tensor y(x.shape());
  xhat_cache_ = Tensor(x.shape());
  inv_std_cache_.assign(rows, 0.0);
  const double* g = gamma_.value.data();
  const double* b = beta_.value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * dim_;
    double mean = 0.0;
    for (int i = 0; i < dim_; ++i) mean += xr[i];
    mean /= dim_;
    double var = 0.0;
    for (int i = 0; i < dim_; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= dim_;
    const double istd = 1.0 / std::sqrt(var + eps_);
    inv_std_cache_[r] = istd;
    double* xh = xhat_cache_.data() + r * dim_;
    double* yr = y.data() + r * dim_;
    for (int i = 0; i < dim_; ++i) {
      xh[i] = (xr[i] - mean) * istd;
      yr[i] = g[i] * xh[i] + b[i];
    }
  }
  return y;
}

Tensor LayerNorm::backward(const Tensor& dy) {
  const std::size_t rows = dy.size() / dim_;
  Tensor dx(dy.shape());
  const double* g = gamma_.value.data();
  double* dg = gamma_.grad.data();
  double* db = beta_.grad.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = dy.data() + r * dim_;
    const double* xh = xhat_cache_.data() + r * dim_;
    const double istd = inv_std_cache_[r];
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (int i = 0; i < dim_; ++i) {
      const double dxh = dyr[i] * g[i];
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xh[i];
      dg[i] += dyr[i] * xh[i];
      db[i] += dyr[i];
    }
    mean_dxhat /= dim_;
    mean_dxhat_xhat /= dim_;
    double* dxr = dx.data() + r * dim_;
    for (int i = 0; i < dim_; ++i) {
      const double dxh = dyr[i] * g[i];
      dxr[i] = istd * (dxh - mean_dxhat - xh[i] * mean_dxhat_xhat);
    }
  }
  return dx;
}

void LayerNorm::params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(const std::string& name, int channels)
    : ch_(channels),
      gamma_(name + ".gamma", {static_cast<std::size_t>(channels)}),
      beta_(name + ".beta", {static_cast<std::size_t>(channels)}),
      running_mean_(name + ".running_mean", {static_cast<std::size_t>(channels)}, false),
      running_var_(name + ".running_var", {static_cast<std::size_t>(channels)}, false) {
  gamma_.value.fill(1.0);
  running_var_.value.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  training_cache_ = training;
  const std::size_t m = x.size() / ch_;  // N*H*W per channel
  Tensor y(x.shape());
  xhat_cache_ = Tensor(x.shape());
  inv_std_cache_.assign(ch_, 0.0);
  const double* g = gamma_.value.data();
  const double* b = beta_.value.data();
  for (int c = 0; c < ch_; ++c) {
    double mean, var;
    if (training) {
      mean = 0.0;
      for (std::size_t r = 0; r < m; ++r) mean += x[r * ch_ + c];
      mean /= static_cast<double>(m);
      var = 0.0;
      for (std::size_t r = 0; r < m; ++r) {
        const double d = x[r * ch_ + c] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      running_mean_.value[c] = (1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean;
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      running_var_.value[c] = (1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
    }
    const double istd = 1.0 / std::sqrt(var + eps_);
    inv_std_cache_[c] = istd;
    for (std::size_t r = 0; r < m; ++r) {
      const double xh = (x[r * ch_ + c] - mean) * istd;
      xhat_cache_[r * ch_ + c] = xh;
      y[r * ch_ + c] = g[c] * xh + b[c];
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const std::size_t m = dy.size() / ch_;
  Tensor dx(dy.shape());
  const double* g = gamma_.value.data();
  double* dg = gamma_.grad.data();
  double* db = beta_.grad.data();
  for (int c = 0; c < ch_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      sum_dy += dy[r * ch_ + c];
      sum_dy_xhat += dy[r * ch_ + c] * xhat_cache_[r * ch_ + c];
    }
    dg[c] += sum_dy_xhat;
    db[c] += sum_dy;
    const double istd = inv_std_cache_[c];
    if (training_cache_) {
      const double md = static_cast<double>(m);
      for (std::size_t r = 0; r < m; ++r) {
        dx[r * ch_ + c] = g[c] * istd *
                          (dy[r * ch_ + c] - sum_dy / md -
                           xhat_cache_[r * ch_ + c] * sum_dy_xhat / md);
      }
    } else {
      for (std::size_t r = 0; r < m; ++r) dx[r * ch_ + c] = dy[r * ch_ + c] * g[c] * istd;
    }
  }
  return dx;
}

void BatchNorm2d::params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// ---------------------------------------------------------------------------
// Softmax

Tensor softmax_rows(const Tensor& x) {
  const std::size_t dim = x.shape().back();
  const std::size_t rows = x.size() / dim;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * dim;
    double* yr = y.data() + r * dim;
    double mx = xr[0];
    for (std::size_t i = 1; i < dim; ++i) mx = std::max(mx, xr[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      sum += yr[i];
    }
    for (std::size_t i = 0; i < dim; ++i) yr[i] /= sum;
  }
  return y;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy) {
  const std::size_t dim = y.shape().back();
  const std::size_t rows = y.size() / dim;
  Tensor dx(y.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* yr = y.data() + r * dim;
    const double* dyr = dy.data() + r * dim;
    double dot = 0.0;
    for (std::size_t i = 0; i < dim; ++i) dot += yr[i] * dyr[i];
    double* dxr = dx.data() + r * dim;
    for (std::size_t i = 0; i < dim; ++i) dxr[i] = yr[i] * (dyr[i] - dot);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// MultiHeadSelfAttention

MultiHeadSelfAttention::MultiHeadSelfAttention(const std::string& name, int dim, int heads,
                                               Rng& rng)
    : dim_(dim),
      heads_(heads),
      head_dim_(dim / heads),
      qkv_(name + ".qkv", dim, 3 * dim, rng, Init::kXavier),
      out_(name + ".out", dim, dim, rng, Init::kXavier) {
  if (dim % heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x) {
  const std::size_t n = x.dim(0), t = x.dim(1);
  const std::size_t d = static_cast<std::size_t>(dim_), dh = static_cast<std::size_t>(head_dim_);
  qkv_cache_ = qkv_.forward(x);  // (N, T, 3D)
  probs_cache_ = Tensor({n, static_cast<std::size_t>(heads_), t, t});
  Tensor ctx({n, t, d});
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  Tensor q({t, dh}), k({t, dh}), v({t, dh}), scores({t, t}), ctx_h({t, dh});
  for (std::size_t in = 0; in < n; ++in) {
    for (int h = 0; h < heads_; ++h) {
      for (std::size_t row = 0; row < t; ++row) {
        const double* base = qkv_cache_.data() + (in * t + row) * 3 * d;
        std::memcpy(q.data() + row * dh, base + h * dh, dh * sizeof(double));
        std::memcpy(k.data() + row * dh, base + d + h * dh, dh * sizeof(double));
        std::memcpy(v.data() + row * dh, base + 2 * d + h * dh, dh * sizeof(double));
      }
      matmul(q.data(), k.data(), scores.data(), t, dh, t, false, /*trans_b=*/true);
      for (std::size_t i = 0; i < t * t; ++i) scores[i] *= scale;
      Tensor probs = softmax_rows(scores);
      std::memcpy(probs_cache_.data() + (in * heads_ + h) * t * t, probs.data(),
                  t * t * sizeof(double));
      matmul(probs.data(), v.data(), ctx_h.data(), t, t, dh);
      for (std::size_t row = 0; row < t; ++row) {
        std::memcpy(ctx.data() + (in * t + row) * d + h * dh, ctx_h.data() + row * dh,
                    dh * sizeof(double));
      }
    }
  }
  return out_.forward(ctx);
}

Tensor MultiHeadSelfAttention::backward(const Tensor& dy) {
  Tensor dctx = out_.backward(dy);  // (N, T, D)
  const std::size_t n = dctx.dim(0), t = dctx.dim(1);
  const std::size_t d = static_cast<std::size_t>(dim_), dh = static_cast<std::size_t>(head_dim_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  Tensor dqkv({n, t, 3 * d});
  Tensor q({t, dh}), k({t, dh}), v({t, dh}), probs({t, t});
  Tensor dctx_h({t, dh}), dprobs({t, t}), dv({t, dh}), dq({t, dh}), dk({t, dh});
  for (std::size_t in = 0; in < n; ++in) {
    for (int h = 0; h < heads_; ++h) {
      for (std::size_t row = 0; row < t; ++row) {
        const double* base = qkv_cache_.data() + (in * t + row) * 3 * d;
        std::memcpy(q.data() + row * dh, base + h * dh, dh * sizeof(double));
        std::memcpy(k.data() + row * dh, base + d + h * dh, dh * sizeof(double));
        std::memcpy(v.data() + row * dh, base + 2 * d + h * dh, dh * sizeof(double));
        std::memcpy(dctx_h.data() + row * dh, dctx.data() + (in * t + row) * d + h * dh,
                    dh * sizeof(double));
      }
      std::memcpy(probs.data(), probs_cache_.data() + (in * heads_ + h) * t * t,
                  t * t * sizeof(double));
      matmul(dctx_h.data(), v.data(), dprobs.data(), t, dh, t, false, /*trans_b=*/true);
      matmul(probs.data(), dctx_h.data(), dv.data(), t, t, dh, /*trans_a=*/true);
      Tensor dscores = softmax_rows_backward(probs, dprobs);
      for (std::size_t i = 0; i < t * t; ++i) dscores[i] *= scale;
      matmul(dscores.data(), k.data(), dq.data(), t, t, dh);
      matmul(dscores.data(), q.data(), dk.data(), t, t, dh, /*trans_a=*/true);
      for (std::size_t row = 0; row < t; ++row) {
        double* base = dqkv.data() + (in * t + row) * 3 * d;
        std::memcpy(base + h * dh, dq.data() + row * dh, dh * sizeof(double));
        std::memcpy(base + d + h * dh, dk.data() + row * dh, dh * sizeof(double));
        std::memcpy(base + 2 * d + h * dh, dv.data() + row * dh, dh * sizeof(double));
      }
    }
  }
  return qkv_.backward(dqkv);
}

void MultiHeadSelfAttention::params(std::vector<Param*>& out) {
  qkv_.params(out);
  out_.params(out);
}

// ---------------------------------------------------------------------------
// TransformerBlock

TransformerBlock::TransformerBlock(const std::string& name, int dim, int heads, double mlp_ratio,
                                   Rng& rng)
    : ln1_(name + ".ln1", dim),
      attn_(name + ".attn", dim, heads, rng),
      ln2_(name + ".ln2", dim),
      fc1_(name + ".mlp.fc1", dim, static_cast<int>(dim * mlp_ratio), rng, Init::kXavier),
      fc2_(name + ".mlp.fc2", static_cast<int>(dim * mlp_ratio), dim, rng, Init::kXavier) {}

Tensor TransformerBlock::forward(const Tensor& x) {
  Tensor a = attn_.forward(ln1_.forward(x));
  add_inplace(a, x);
  Tensor m = fc2_.forward(act_.forward(fc1_.forward(ln2_.forward(a))));
  add_inplace(m, a);
  return m;
}

Tensor TransformerBlock::backward(const Tensor& dy) {
  Tensor da = ln2_.backward(fc1_.backward(act_.backward(fc2_.backward(dy))));
  add_inplace(da, dy);
  Tensor dx = ln1_.backward(attn_.backward(da));
  add_inplace(dx, da);
  return dx;
}

void TransformerBlock::params(std::vector<Param*>& out) {
  ln1_.params(out);
  attn_.params(out);
  ln2_.params(out);
  fc1_.params(out);
  fc2_.params(out);
}

}  // namespace osr::nn

#include "osr/model.hpp"

#include "osr/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>

namespace osr {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::derive() {
  int h = input_height, w = input_width;
  for (std::size_t i = 0; i < backbone_stage_channels.size(); ++i) {
    h /= 2;
    w /= 2;
  }
  feature_height = h;
  feature_width = w;
  feature_channels = backbone_stage_channels.empty() ? input_channels
                                                     : backbone_stage_channels.back();
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("ModelConfig: " + msg); };
  if (input_height <= 0 || input_width <= 0) fail("input size must be positive");
  if (input_channels != 3) fail("input_channels must be 3");
  if (num_classes < 2) fail("num_classes must be >= 2, got " + std::to_string(num_classes));
  if (backbone_stage_channels.empty()) fail("backbone_stage_channels must be nonempty");
  for (int c : backbone_stage_channels)
    if (c <= 0) fail("backbone stage channels must be positive");
  int h = input_height, w = input_width;
  for (std::size_t i = 0; i < backbone_stage_channels.size(); ++i) {
    if (h % 2 != 0 || w % 2 != 0)
      fail("input size " + std::to_string(input_height) + "x" + std::to_string(input_width) +
           " is not divisible by 2^" + std::to_string(backbone_stage_channels.size()));
    h /= 2;
    w /= 2;
  }
  if (feature_height != h || feature_width != w ||
      feature_channels != backbone_stage_channels.back())
    fail("feature grid is inconsistent with input size and stage list (call derive())");
  if (patch_size <= 0 || feature_height % patch_size != 0 || feature_width % patch_size != 0)
    fail("patch_size " + std::to_string(patch_size) + " must divide the feature grid " +
         std::to_string(feature_height) + "x" + std::to_string(feature_width));
  if (vit_enabled) {
    if (num_blocks < 1) fail("num_blocks must be >= 1");
    if (num_heads < 1 || embed_dim % num_heads != 0)
      fail("embed_dim " + std::to_string(embed_dim) + " must be divisible by num_heads " +
           std::to_string(num_heads));
    if (mlp_ratio <= 0) fail("mlp_ratio must be positive");
  }
}

json ModelConfig::to_json() const {
  return json{{"input_height", input_height},
              {"input_width", input_width},
              {"input_channels", input_channels},
              {"num_classes", num_classes},
              {"backbone_stage_channels", backbone_stage_channels},
              {"feature_height", feature_height},
              {"feature_width", feature_width},
              {"feature_channels", feature_channels},
              {"patch_size", patch_size},
              {"embed_dim", embed_dim},
              {"num_blocks", num_blocks},
              {"num_heads", num_heads},
              {"mlp_ratio", mlp_ratio},
              {"vit_enabled", vit_enabled},
              {"localization_enabled", localization_enabled}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.input_height = j.at("input_height").get<int>();
  c.input_width = j.at("input_width").get<int>();
  c.input_channels = j.at("input_channels").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.backbone_stage_channels = j.at("backbone_stage_channels").get<std::vector<int>>();
  c.feature_height = j.at("feature_height").get<int>();
  c.feature_width = j.at("feature_width").get<int>();
  c.feature_channels = j.at("feature_channels").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.num_blocks = j.at("num_blocks").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.vit_enabled = j.at("vit_enabled").get<bool>();
  c.localization_enabled = j.at("localization_enabled").get<bool>();
  return c;
}

// ---------------------------------------------------------------------------
// Free ops

namespace {

Tensor patchify_batch(const Tensor& fr, int p) {
  const std::size_t b = fr.dim(0), hf = fr.dim(1), wf = fr.dim(2), df = fr.dim(3);
  const std::size_t pp = static_cast<std::size_t>(p);
  const std::size_t blocks_y = hf / pp, blocks_x = wf / pp;
  const std::size_t np = blocks_y * blocks_x;
  const std::size_t patch_dim = pp * pp * df;
  Tensor out({b, np, patch_dim});
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t by = 0; by < blocks_y; ++by) {
      for (std::size_t bx = 0; bx < blocks_x; ++bx) {
        double* row = out.data() + (ib * np + by * blocks_x + bx) * patch_dim;
        for (std::size_t py = 0; py < pp; ++py) {
          const std::size_t iy = by * pp + py;
          const double* src = fr.data() + ((ib * hf + iy) * wf + bx * pp) * df;
          std::memcpy(row + py * pp * df, src, pp * df * sizeof(double));
        }
      }
    }
  }
  return out;
}

Tensor unpatchify_batch(const Tensor& patches, int p, std::size_t hf, std::size_t wf,
                        std::size_t df) {
  const std::size_t b = patches.dim(0), np = patches.dim(1);
  const std::size_t pp = static_cast<std::size_t>(p);
  const std::size_t blocks_x = wf / pp;
  const std::size_t patch_dim = pp * pp * df;
  Tensor fr({b, hf, wf, df});
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t k = 0; k < np; ++k) {
      const std::size_t by = k / blocks_x, bx = k % blocks_x;
      const double* row = patches.data() + (ib * np + k) * patch_dim;
      for (std::size_t py = 0; py < pp; ++py) {
        const std::size_t iy = by * pp + py;
        double* dst = fr.data() + ((ib * hf + iy) * wf + bx * pp) * df;
        std::memcpy(dst, row + py * pp * df, pp * df * sizeof(double));
      }
    }
  }
  return fr;
}

void check_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw NumericError(what + " produced non-finite values");
}

}  // namespace

Tensor patchify(const Tensor& feature_map, int patch_size) {
  if (feature_map.rank() != 3)
    throw ConfigError("patchify: feature map must be rank 3, got " + feature_map.shape_str());
  const std::size_t hf = feature_map.dim(0), wf = feature_map.dim(1);
  if (patch_size <= 0 || hf % patch_size != 0 || wf % patch_size != 0) {
    throw ConfigError("patchify: P=" + std::to_string(patch_size) +
                      " does not divide feature grid H_f=" + std::to_string(hf) +
                      ", W_f=" + std::to_string(wf));
  }
  Tensor batched({1, hf, wf, feature_map.dim(2)},
                 std::vector<double>(feature_map.data(), feature_map.data() + feature_map.size()));
  Tensor out = patchify_batch(batched, patch_size);
  out.reshape({out.dim(1), out.dim(2)});
  return out;
}

Tensor embed_sequence(const Tensor& patches, const Tensor& projection, const Tensor& cls_token,
                      const Tensor& pos_embed) {
  const std::size_t np = patches.dim(0);
  const std::size_t patch_dim = patches.dim(1);
  const std::size_t dp = projection.dim(1);
  if (projection.dim(0) != patch_dim || cls_token.dim(0) != dp || pos_embed.dim(0) != np + 1 ||
      pos_embed.dim(1) != dp) {
    throw ConfigError("embed_sequence: inconsistent shapes, patches " + patches.shape_str() +
                      ", projection " + projection.shape_str() + ", cls " +
                      cls_token.shape_str() + ", pos " + pos_embed.shape_str());
  }
  Tensor seq({np + 1, dp});
  matmul(patches.data(), projection.data(), seq.data() + dp, np, patch_dim, dp);
  for (std::size_t i = 0; i < dp; ++i) seq[i] = cls_token[i];
  for (std::size_t r = 0; r < np + 1; ++r)
    for (std::size_t i = 0; i < dp; ++i) seq[r * dp + i] += pos_embed.at(r, i);
  return seq;
}

Tensor softmax(const Tensor& logits) {
  Tensor p(logits.shape());
  double mx = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (std::size_t i = 0; i < p.size(); ++i) p[i] /= sum;
  return p;
}

int argmax_lowest(const Tensor& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

// ---------------------------------------------------------------------------
// Backbone

Backbone::Backbone(int in_channels, const std::vector<int>& stage_channels, Rng& rng)
    : stem_("backbone.stem", in_channels, stage_channels.front(), 3, 1, rng) {
  int in_ch = stage_channels.front();
  for (std::size_t i = 0; i < stage_channels.size(); ++i) {
    const std::string prefix = "backbone.stage" + std::to_string(i);
    auto stage = std::make_unique<Stage>(Stage{
        nn::Conv2d(prefix + ".conv1", in_ch, stage_channels[i], 3, 2, rng),
        nn::ReLU{},
        nn::Conv2d(prefix + ".conv2", stage_channels[i], stage_channels[i], 3, 1, rng),
        nn::Conv2d(prefix + ".proj", in_ch, stage_channels[i], 1, 2, rng),
        nn::ReLU{},
    });
    stages_.push_back(std::move(stage));
    in_ch = stage_channels[i];
  }
}

Tensor Backbone::forward(const Tensor& x) {
  Tensor h = stem_relu_.forward(stem_.forward(x));
  for (auto& s : stages_) {
    Tensor main = s->conv2.forward(s->relu1.forward(s->conv1.forward(h)));
    Tensor shortcut = s->proj.forward(h);
    for (std::size_t i = 0; i < main.size(); ++i) main[i] += shortcut[i];
    h = s->relu_out.forward(main);
  }
  return h;
}

Tensor Backbone::backward(const Tensor& dy) {
  Tensor d = dy;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    Stage& s = **it;
    Tensor dsum = s.relu_out.backward(d);
    Tensor dmain = s.conv1.backward(s.relu1.backward(s.conv2.backward(dsum)));
    Tensor dshort = s.proj.backward(dsum);
    for (std::size_t i = 0; i < dmain.size(); ++i) dmain[i] += dshort[i];
    d = std::move(dmain);
  }
  return stem_.backward(stem_relu_.backward(d));
}

void Backbone::params(std::vector<nn::Param*>& out) {
  stem_.params(out);
  for (auto& s : stages_) {
    s->conv1.params(out);
    s->conv2.params(out);
    s->proj.params(out);
  }
}

// ---------------------------------------------------------------------------
// PatchEmbed

PatchEmbed::PatchEmbed(int patch_dim, int embed_dim, int num_patches, Rng& rng)
    : patch_dim_(patch_dim),
      embed_dim_(embed_dim),
      num_patches_(num_patches),
      projection_("vit.patch_embed.projection",
                  {static_cast<std::size_t>(patch_dim), static_cast<std::size_t>(embed_dim)}),
      cls_token_("vit.patch_embed.cls_token", {static_cast<std::size_t>(embed_dim)}),
      pos_embed_("vit.patch_embed.pos_embed",
                 {static_cast<std::size_t>(num_patches + 1), static_cast<std::size_t>(embed_dim)}) {
  nn::init_tensor(projection_.value, nn::Init::kXavier, patch_dim, embed_dim, rng);
  for (std::size_t i = 0; i < cls_token_.value.size(); ++i)
    cls_token_.value[i] = rng.normal(0.0, 0.02);
  for (std::size_t i = 0; i < pos_embed_.value.size(); ++i)
    pos_embed_.value[i] = rng.normal(0.0, 0.02);
}

Tensor PatchEmbed::forward(const Tensor& patches) {
  const std::size_t b = patches.dim(0), np = patches.dim(1);
  const std::size_t dp = static_cast<std::size_t>(embed_dim_);
  if (np != static_cast<std::size_t>(num_patches_) ||
      patches.dim(2) != static_cast<std::size_t>(patch_dim_)) {
    throw ConfigError("patch embedding: sequence shape " + patches.shape_str() +
                      " does not match configured " + std::to_string(num_patches_) + " x " +
                      std::to_string(patch_dim_));
  }
  patches_cache_ = patches;
  Tensor tokens({b, np, dp});
  matmul(patches.data(), projection_.value.data(), tokens.data(), b * np,
         static_cast<std::size_t>(patch_dim_), dp);
  Tensor seq({b, np + 1, dp});
  const double* pos = pos_embed_.value.data();
  for (std::size_t ib = 0; ib < b; ++ib) {
    double* s0 = seq.data() + ib * (np + 1) * dp;
    for (std::size_t i = 0; i < dp; ++i) s0[i] = cls_token_.value[i] + pos[i];
    for (std::size_t k = 0; k < np; ++k) {
      const double* tk = tokens.data() + (ib * np + k) * dp;
      double* sk = s0 + (k + 1) * dp;
      const double* pk = pos + (k + 1) * dp;
      for (std::size_t i = 0; i < dp; ++i) sk[i] = tk[i] + pk[i];
    }
  }
  return seq;
}

Tensor PatchEmbed::backward(const Tensor& dseq) {
  const std::size_t b = dseq.dim(0);
  const std::size_t np = static_cast<std::size_t>(num_patches_);
  const std::size_t dp = static_cast<std::size_t>(embed_dim_);
  double* dpos = pos_embed_.grad.data();
  double* dcls = cls_token_.grad.data();
  Tensor dtokens({b, np, dp});
  for (std::size_t ib = 0; ib < b; ++ib) {
    const double* d0 = dseq.data() + ib * (np + 1) * dp;
    for (std::size_t i = 0; i < dp; ++i) {
      dcls[i] += d0[i];
      dpos[i] += d0[i];
    }
    for (std::size_t k = 0; k < np; ++k) {
      const double* dk = d0 + (k + 1) * dp;
      double* tk = dtokens.data() + (ib * np + k) * dp;
      double* pk = dpos + (k + 1) * dp;
      for (std::size_t i = 0; i < dp; ++i) {
        tk[i] = dk[i];
        pk[i] += dk[i];
      }
    }
  }
  matmul(patches_cache_.data(), dtokens.data(), projection_.grad.data(),
         static_cast<std::size_t>(patch_dim_), b * np, dp, /*trans_a=*/true, /*trans_b=*/false,
         /*accumulate=*/true);
  Tensor dpatches({b, np, static_cast<std::size_t>(patch_dim_)});
  matmul(dtokens.data(), projection_.value.data(), dpatches.data(), b * np, dp,
         static_cast<std::size_t>(patch_dim_), /*trans_a=*/false, /*trans_b=*/true);
  return dpatches;
}

void PatchEmbed::params(std::vector<nn::Param*>& out) {
  out.push_back(&projection_);
  out.push_back(&cls_token_);
  out.push_back(&pos_embed_);
}

// ---------------------------------------------------------------------------
// TransformerEncoder

TransformerEncoder::TransformerEncoder(int num_blocks, int dim, int heads, double mlp_ratio,
                                       Rng& rng) {
  for (int i = 0; i < num_blocks; ++i) {
    blocks_.push_back(std::make_unique<nn::TransformerBlock>("vit.block" + std::to_string(i), dim,
                                                             heads, mlp_ratio, rng));
  }
}

Tensor TransformerEncoder::forward(const Tensor& seq) {
  Tensor h = seq;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = blocks_[i]->forward(h);
    check_finite(h, "transformer block " + std::to_string(i));
  }
  return h;
}

Tensor TransformerEncoder::backward(const Tensor& dy) {
  Tensor d = dy;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = (*it)->backward(d);
  return d;
}

void TransformerEncoder::params(std::vector<nn::Param*>& out) {
  for (auto& b : blocks_) b->params(out);
}

// ---------------------------------------------------------------------------
// FcnHead

FcnHead::FcnHead(int in_channels, Rng& rng)
    : conv1_("fcn.conv1", in_channels, std::max(8, in_channels / 4), 3, 1, rng),
      bn_("fcn.bn", std::max(8, in_channels / 4)),
      conv2_("fcn.conv2", std::max(8, in_channels / 4), 1, 3, 1, rng) {}

Tensor FcnHead::forward(const Tensor& fr, bool training) {
  Tensor h = conv2_.forward(relu_.forward(bn_.forward(conv1_.forward(fr), training)));
  Tensor mask = sigmoid_.forward(h);
  mask.reshape({mask.dim(0), mask.dim(1), mask.dim(2)});
  return mask;
}

Tensor FcnHead::backward(const Tensor& dmask) {
  Tensor d = dmask;
  d.reshape({d.dim(0), d.dim(1), d.dim(2), 1});
  return conv1_.backward(bn_.backward(relu_.backward(conv2_.backward(sigmoid_.backward(d)))));
}

void FcnHead::params(std::vector<nn::Param*>& out) {
  conv1_.params(out);
  bn_.params(out);
  conv2_.params(out);
}

// ---------------------------------------------------------------------------
// HybridModel

HybridModel::HybridModel(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed, 0xA11C0DEULL);
  backbone_ = std::make_unique<Backbone>(cfg_.input_channels, cfg_.backbone_stage_channels, rng);
  if (cfg_.vit_enabled) {
    const int patch_dim = cfg_.patch_size * cfg_.patch_size * cfg_.feature_channels;
    patch_embed_ = std::make_unique<PatchEmbed>(patch_dim, cfg_.embed_dim, cfg_.num_patches(), rng);
    encoder_ = std::make_unique<TransformerEncoder>(cfg_.num_blocks, cfg_.embed_dim,
                                                    cfg_.num_heads, cfg_.mlp_ratio, rng);
    head_ = std::make_unique<nn::Linear>("head", cfg_.embed_dim, cfg_.num_classes, rng,
                                         nn::Init::kSmall);
  } else {
    gap_head_ = std::make_unique<nn::Linear>("head", cfg_.feature_channels, cfg_.num_classes, rng,
                                             nn::Init::kSmall);
  }
  if (cfg_.localization_enabled) fcn_ = std::make_unique<FcnHead>(cfg_.feature_channels, rng);
}

std::vector<nn::Param*> HybridModel::params() {
  std::vector<nn::Param*> out;
  backbone_->params(out);
  if (patch_embed_) patch_embed_->params(out);
  if (encoder_) encoder_->params(out);
  if (head_) head_->params(out);
  if (gap_head_) gap_head_->params(out);
  if (fcn_) fcn_->params(out);
  return out;
}

void HybridModel::zero_grads() {
  for (nn::Param* p : params()) p->zero_grad();
}

Tensor HybridModel::classify_batch(const Tensor& fr) {
  const std::size_t b = fr.dim(0);
  batch_cache_ = b;
  if (cfg_.vit_enabled) {
    Tensor patches = patchify_batch(fr, cfg_.patch_size);
    Tensor seq = patch_embed_->forward(patches);
    Tensor encoded = encoder_->forward(seq);
    encoded_cache_ = encoded;
    const std::size_t dp = static_cast<std::size_t>(cfg_.embed_dim);
    const std::size_t t = encoded.dim(1);
    Tensor cls_rows({b, dp});
    for (std::size_t ib = 0; ib < b; ++ib)
      std::memcpy(cls_rows.data() + ib * dp, encoded.data() + ib * t * dp, dp * sizeof(double));
    return head_->forward(cls_rows);
  }
  // Backbone-only variant: global average pool then FC, rejection reads the
  // same pre-softmax logits.
  const std::size_t hw = fr.dim(1) * fr.dim(2);
  const std::size_t df = fr.dim(3);
  gap_count_ = hw;
  Tensor pooled({b, df});
  for (std::size_t ib = 0; ib < b; ++ib) {
    double* prow = pooled.data() + ib * df;
    const double* base = fr.data() + ib * hw * df;
    for (std::size_t s = 0; s < hw; ++s)
      for (std::size_t c = 0; c < df; ++c) prow[c] += base[s * df + c];
    for (std::size_t c = 0; c < df; ++c) prow[c] /= static_cast<double>(hw);
  }
  return gap_head_->forward(pooled);
}

Tensor HybridModel::classify_backward(const Tensor& dlogits) {
  const std::size_t b = batch_cache_;
  const std::size_t hf = static_cast<std::size_t>(cfg_.feature_height);
  const std::size_t wf = static_cast<std::size_t>(cfg_.feature_width);
  const std::size_t df = static_cast<std::size_t>(cfg_.feature_channels);
  if (cfg_.vit_enabled) {
    Tensor dcls = head_->backward(dlogits);  // (B, Dp)
    const std::size_t dp = static_cast<std::size_t>(cfg_.embed_dim);
    const std::size_t t = encoded_cache_.dim(1);
    Tensor dseq({b, t, dp});
    for (std::size_t ib = 0; ib < b; ++ib)
      std::memcpy(dseq.data() + ib * t * dp, dcls.data() + ib * dp, dp * sizeof(double));
    Tensor dembed = encoder_->backward(dseq);
    Tensor dpatches = patch_embed_->backward(dembed);
    return unpatchify_batch(dpatches, cfg_.patch_size, hf, wf, df);
  }
  Tensor dpooled = gap_head_->backward(dlogits);  // (B, Df)
  Tensor dfr({b, hf, wf, df});
  const double inv = 1.0 / static_cast<double>(gap_count_);
  for (std::size_t ib = 0; ib < b; ++ib) {
    const double* drow = dpooled.data() + ib * df;
    double* base = dfr.data() + ib * hf * wf * df;
    for (std::size_t s = 0; s < hf * wf; ++s)
      for (std::size_t c = 0; c < df; ++c) base[s * df + c] = drow[c] * inv;
  }
  return dfr;
}

HybridModel::BatchResult HybridModel::forward_batch(const Tensor& images, bool training) {
  if (images.rank() != 4 || images.dim(1) != static_cast<std::size_t>(cfg_.input_height) ||
      images.dim(2) != static_cast<std::size_t>(cfg_.input_width) ||
      images.dim(3) != static_cast<std::size_t>(cfg_.input_channels)) {
    throw ConfigError("model input shape " + images.shape_str() + " does not match configured " +
                      std::to_string(cfg_.input_height) + "x" + std::to_string(cfg_.input_width) +
                      "x" + std::to_string(cfg_.input_channels));
  }
  Tensor fr = backbone_->forward(images);
  BatchResult res;
  res.logits = classify_batch(fr);
  if (cfg_.localization_enabled) res.masks = fcn_->forward(fr, training);
  return res;
}

void HybridModel::backward(const Tensor& dlogits, const Tensor* dmasks) {
  Tensor dfr = classify_backward(dlogits);
  if (cfg_.localization_enabled && dmasks != nullptr) {
    Tensor dfr_loc = fcn_->backward(*dmasks);
    for (std::size_t i = 0; i < dfr.size(); ++i) dfr[i] += dfr_loc[i];
  }
  backbone_->backward(dfr);
}

ModelOutput HybridModel::forward(const Tensor& image) {
  if (image.rank() != 3)
    throw ConfigError("forward expects a single image (H, W, C), got " + image.shape_str());
  Tensor batch({1, image.dim(0), image.dim(1), image.dim(2)},
               std::vector<double>(image.data(), image.data() + image.size()));
  BatchResult r = forward_batch(batch, /*training=*/false);
  ModelOutput out;
  out.logits = Tensor({r.logits.dim(1)},
                      std::vector<double>(r.logits.data(), r.logits.data() + r.logits.dim(1)));
  out.probabilities = softmax(out.logits);
  out.activation_vector = out.logits;
  if (cfg_.localization_enabled) {
    const std::size_t hf = r.masks.dim(1), wf = r.masks.dim(2);
    out.predicted_mask =
        Tensor({hf, wf}, std::vector<double>(r.masks.data(), r.masks.data() + hf * wf));
  }
  return out;
}

Tensor HybridModel::extract_features(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != static_cast<std::size_t>(cfg_.input_height) ||
      image.dim(1) != static_cast<std::size_t>(cfg_.input_width) ||
      image.dim(2) != static_cast<std::size_t>(cfg_.input_channels)) {
    throw ConfigError("extract_features: image shape " + image.shape_str() +
                      " does not match configured input");
  }
  Tensor batch({1, image.dim(0), image.dim(1), image.dim(2)},
               std::vector<double>(image.data(), image.data() + image.size()));
  Tensor fr = backbone_->forward(batch);
  fr.reshape({fr.dim(1), fr.dim(2), fr.dim(3)});
  return fr;
}

Tensor HybridModel::localize(const Tensor& feature_map) {
  if (!cfg_.localization_enabled)
    throw ConfigError("localize called on a model with localization disabled");
  Tensor batch({1, feature_map.dim(0), feature_map.dim(1), feature_map.dim(2)},
               std::vector<double>(feature_map.data(), feature_map.data() + feature_map.size()));
  Tensor m = fcn_->forward(batch, /*training=*/false);
  m.reshape({m.dim(1), m.dim(2)});
  return m;
}

}  // namespace osr

#pragma once

#include "osr/nn.hpp"
#include "osr/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace osr {

/// Architecture hyperparameters for the hybrid classifier. The feature grid
/// (feature_height/width/channels) is determined by the input size and the
/// backbone stage list; derive() fills it in and validate() cross-checks.
struct ModelConfig {
  int input_height = 64;
  int input_width = 64;
  int input_channels = 3;
  int num_classes = 2;
  std::vector<int> backbone_stage_channels = {32, 64, 128, 256};
  int feature_height = 0;
  int feature_width = 0;
  int feature_channels = 0;
  int patch_size = 4;
  int embed_dim = 256;
  int num_blocks = 4;
  int num_heads = 8;
  double mlp_ratio = 4.0;
  bool vit_enabled = true;
  bool localization_enabled = true;

  /// Number of patch tokens, feature grid / patch_size squared.
  int num_patches() const {
    return feature_height * feature_width / (patch_size * patch_size);
  }

  /// Fill feature_* from input size and stage list (each stage halves the
  /// spatial extent after the stride-1 stem).
  void derive();
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

/// Per-sample network output.
struct ModelOutput {
  Tensor logits;                       // (N)
  Tensor probabilities;                // (N), softmax of logits
  std::optional<Tensor> predicted_mask;  // (H_f, W_f), present iff localization enabled
  Tensor activation_vector;            // copy of logits, consumed by rejection
};

/// Reshape a feature map (H_f, W_f, D_f) into the patch sequence
/// (N_p, P*P*D_f): row k is the k-th PxP block in raster order, flattened
/// row, column, channel.
Tensor patchify(const Tensor& feature_map, int patch_size);

/// Sequence assembly: row 0 = cls_token + pos[0], row k>0 = fp[k-1]*Ep + pos[k].
Tensor embed_sequence(const Tensor& patches, const Tensor& projection, const Tensor& cls_token,
                      const Tensor& pos_embed);

/// Numerically stable softmax of a logit vector.
Tensor softmax(const Tensor& logits);

/// Argmax with ties resolved to the lowest index.
int argmax_lowest(const Tensor& v);

/// Residual feature extractor: stride-1 kernel-3 stem, then one
/// downsampling residual stage per entry of stage_channels.
class Backbone {
 public:
  Backbone(int in_channels, const std::vector<int>& stage_channels, Rng& rng);

  Tensor forward(const Tensor& x);  // (N, H, W, C) -> (N, H_f, W_f, D_f)
  Tensor backward(const Tensor& dy);
  void params(std::vector<nn::Param*>& out);

 private:
  struct Stage {
    nn::Conv2d conv1;
    nn::ReLU relu1;
    nn::Conv2d conv2;
    nn::Conv2d proj;
    nn::ReLU relu_out;
  };
  nn::Conv2d stem_;
  nn::ReLU stem_relu_;
  std::vector<std::unique_ptr<Stage>> stages_;
};

/// Patch embedding parameters: projection matrix, class token, learned
/// position embeddings.
class PatchEmbed {
 public:
  PatchEmbed(int patch_dim, int embed_dim, int num_patches, Rng& rng);

  Tensor forward(const Tensor& patches);  // (N, N_p, P^2*D_f) -> (N, N_p+1, D_p)
  Tensor backward(const Tensor& dseq);
  void params(std::vector<nn::Param*>& out);

  const Tensor& projection() const { return projection_.value; }
  const Tensor& cls_token() const { return cls_token_.value; }
  const Tensor& pos_embed() const { return pos_embed_.value; }

 private:
  int patch_dim_, embed_dim_, num_patches_;
  nn::Param projection_;  // {patch_dim, embed_dim}
  nn::Param cls_token_;   // {embed_dim}
  nn::Param pos_embed_;   // {num_patches + 1, embed_dim}
  Tensor patches_cache_;
};

/// Stack of pre-LN transformer blocks. Throws NumericError naming the
/// offending block if an intermediate value goes non-finite.
class TransformerEncoder {
 public:
  TransformerEncoder(int num_blocks, int dim, int heads, double mlp_ratio, Rng& rng);

  Tensor forward(const Tensor& seq);  // (N, T, D) -> (N, T, D)
  Tensor backward(const Tensor& dy);
  void params(std::vector<nn::Param*>& out);

 private:
  std::vector<std::unique_ptr<nn::TransformerBlock>> blocks_;
};

/// Localization head: conv -> batch norm -> ReLU -> conv -> sigmoid,
/// predicting the manipulation mask at feature resolution.
class FcnHead {
 public:
  FcnHead(int in_channels, Rng& rng);

  Tensor forward(const Tensor& fr, bool training);  // (N,H_f,W_f,D_f) -> (N,H_f,W_f)
  Tensor backward(const Tensor& dmask);
  void params(std::vector<nn::Param*>& out);

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn_;
  nn::ReLU relu_;
  nn::Conv2d conv2_;
  nn::Sigmoid sigmoid_;
};

/// The full hybrid network. Inference is a pure function of (weights,
/// input); training entry points cache activations for backward.
class HybridModel {
 public:
  HybridModel(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }

  /// Single-image inference (H, W, 3), batch-norm in eval mode.
  ModelOutput forward(const Tensor& image);

  /// Feature extraction for one image: (H, W, 3) -> (H_f, W_f, D_f).
  Tensor extract_features(const Tensor& image);

  /// Localization head on one feature map; usage error when disabled.
  Tensor localize(const Tensor& feature_map);

  struct BatchResult {
    Tensor logits;  // (B, N)
    Tensor masks;   // (B, H_f, W_f) when localization enabled, else empty
  };
  /// Batched forward. `training` selects batch-norm mode and enables
  /// activation caching for a subsequent backward().
  BatchResult forward_batch(const Tensor& images, bool training);

  /// Backward from loss gradients; accumulates parameter gradients.
  /// dmasks may be null when localization is disabled.
  void backward(const Tensor& dlogits, const Tensor* dmasks);

  std::vector<nn::Param*> params();
  void zero_grads();

 private:
  Tensor classify_batch(const Tensor& fr);           // (B,Hf,Wf,Df) -> (B,N) logits
  Tensor classify_backward(const Tensor& dlogits);   // -> d feature map

  ModelConfig cfg_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<PatchEmbed> patch_embed_;
  std::unique_ptr<TransformerEncoder> encoder_;
  std::unique_ptr<nn::Linear> head_;      // embed_dim -> N (class-token readout)
  std::unique_ptr<nn::Linear> gap_head_;  // D_f -> N when the ViT is disabled
  std::unique_ptr<FcnHead> fcn_;
  // caches for backward
  Tensor encoded_cache_;
  std::size_t batch_cache_ = 0;
  std::size_t gap_count_ = 0;
};

}  // namespace osr

#pragma once

// Single-stream ViT encoder and the dual-stream classifier built on it.
//
// Encoder: tokens = flatten(patch) . W_patch + pos[i]; `depth` pre-norm blocks
//   x = x + MHSA(LN(x));  x = x + MLP_gelu(LN(x));
// feature = mean over tokens.
// Dual-stream head: logits = W2 . relu(W1 . [f1, f2] + b1) + b2.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "robofi/autodiff.hpp"
#include "robofi/checkpoint.hpp"
#include "robofi/core_types.hpp"
#include "robofi/preprocess.hpp"

namespace robofi::models {

enum class ModelKind {
  Bivtc,  // one encoder per sniffer, concatenated features
  Vit,    // one encoder fed by the sniffer named in vit_sniffer
};

std::string_view kind_name(ModelKind k);
ModelKind kind_from_name(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::Bivtc;
  std::size_t embed_dim = 128;  // L
  std::size_t heads = 4;        // M
  std::size_t depth = 6;
  std::size_t patch = 45;  // P
  std::size_t mlp_hidden = 512;
  double dropout = 0.4;
  std::size_t num_classes = kNumClasses;
  std::size_t head_hidden = 64;
  // Window shape the positional table is sized for; shorter windows (lower
  // sampling rates) use a prefix of the table.
  std::size_t input_rows = kWindowRows;
  std::size_t input_cols = kPrunedSubcarriers;
  int vit_sniffer = 1;

  std::size_t max_patches() const { return preprocess::patch_count(input_rows, input_cols, patch); }

  /// Throws InvalidConfig / HeadDivisibility on violated invariants.
  void validate() const;

  static ModelConfig paper();
  static ModelConfig tiny();

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct TransformerBlock {
  ad::Tensor<T> ln1_gain, ln1_bias;
  ad::MhaWeights<T> attn;
  ad::Tensor<T> ln2_gain, ln2_bias;
  ad::Tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <typename T>
struct VitEncoder {
  ad::Tensor<T> patch_projection;      // P*P x L
  ad::Tensor<T> positional_embedding;  // N_max x L
  std::vector<TransformerBlock<T>> blocks;
};

template <typename T>
struct ClassifierHead {
  ad::Tensor<T> w1, b1, w2, b2;
};

template <typename T>
class Classifier {
 public:
  /// Glorot-uniform weights, N(0, 0.02) positional table, unit LayerNorm gains.
  Classifier(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::size_t encoder_count() const { return encoders_.size(); }
  VitEncoder<T>& encoder(std::size_t i) { return encoders_.at(i); }
  const VitEncoder<T>& encoder(std::size_t i) const { return encoders_.at(i); }
  ClassifierHead<T>& head() { return head_; }
  const ClassifierHead<T>& head() const { return head_; }

  /// Stable names: enc1.*, enc2.*, head.*
  std::vector<std::pair<std::string, ad::Tensor<T>>> named_parameters() const;
  std::vector<ad::Tensor<T>> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// Logits (length num_classes) from the two sniffers' patch sets. A
  /// single-stream model only reads the one named by vit_sniffer.
  ad::Tensor<T> forward(const preprocess::PatchSet& p1, const preprocess::PatchSet& p2, ad::Rng& rng,
                        bool train) const;

  std::vector<NamedTensor> to_checkpoint() const;
  /// Names and shapes must match this model exactly.
  void load_checkpoint(std::span<const NamedTensor> tensors);

  /// Same weights in another precision.
  template <typename U>
  Classifier<U> cast() const;

  /// FNV-1a over the float32 image of every parameter, in name order.
  std::uint64_t weight_hash() const;

 private:
  ModelConfig cfg_;
  std::vector<VitEncoder<T>> encoders_;
  ClassifierHead<T> head_;
};

template <typename T>
ad::Tensor<T> patch_matrix(const preprocess::PatchSet& p);

template <typename T>
ad::Tensor<T> embed_patches(const preprocess::PatchSet& p, const VitEncoder<T>& enc, const ModelConfig& cfg,
                            ad::Rng& rng, bool train);

template <typename T>
ad::Tensor<T> transformer_block(const ad::Tensor<T>& x, const TransformerBlock<T>& b, const ModelConfig& cfg,
                                ad::Rng& rng, bool train);

template <typename T>
ad::Tensor<T> vit_forward(const preprocess::PatchSet& p, const VitEncoder<T>& enc, const ModelConfig& cfg,
                          ad::Rng& rng, bool train);

/// Patchifies both windows of `s` (already normalized by the caller) and runs the model.
template <typename T>
ad::Tensor<T> bivtc_forward(const Sample& s, const Classifier<T>& model, ad::Rng& rng, bool train);

/// Argmax with ties to the lowest class index; NonFiniteLogits on NaN/Inf.
template <typename T>
ActivityLabel predict(std::span<const T> logits);

}  // namespace robofi::models

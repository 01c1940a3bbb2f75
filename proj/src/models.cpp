#include "robofi/models.hpp"

#include <bit>
#include <cmath>
#include <map>

#include "json.hpp"

namespace robofi::models {

using ad::Rng;
using ad::Shape;
using ad::Tensor;
using nlohmann::json;

std::string_view kind_name(ModelKind k) { return k == ModelKind::Bivtc ? "bivtc" : "vit"; }

ModelKind kind_from_name(std::string_view name) {
  if (name == "bivtc" || name == "BiVTC") return ModelKind::Bivtc;
  if (name == "vit" || name == "ViT") return ModelKind::Vit;
  throw Error(ErrorCode::InvalidConfig, "unknown model kind '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (heads == 0 || embed_dim % heads != 0) {
    throw Error(ErrorCode::HeadDivisibility,
                "embed_dim " + std::to_string(embed_dim) + " must be divisible by heads " + std::to_string(heads));
  }
  if (depth < 1) throw Error(ErrorCode::InvalidConfig, "depth must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidConfig, "dropout must lie in [0, 1)");
  if (num_classes != kNumClasses) throw Error(ErrorCode::InvalidConfig, "num_classes must be 8");
  if (patch == 0 || embed_dim == 0 || mlp_hidden == 0 || head_hidden == 0 || input_rows == 0 || input_cols == 0) {
    throw Error(ErrorCode::InvalidConfig, "sizes must be positive");
  }
  if (vit_sniffer != 1 && vit_sniffer != 2) throw Error(ErrorCode::InvalidConfig, "vit_sniffer must be 1 or 2");
}

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.embed_dim = 8;
  c.heads = 2;
  c.depth = 1;
  c.patch = 2;
  c.mlp_hidden = 32;
  c.dropout = 0.0;
  c.head_hidden = 16;
  c.input_rows = 4;
  c.input_cols = 4;
  return c;
}

std::string ModelConfig::to_json() const {
  json j;
  j["kind"] = kind_name(kind);
  j["embed_dim"] = embed_dim;
  j["heads"] = heads;
  j["depth"] = depth;
  j["patch"] = patch;
  j["mlp_hidden"] = mlp_hidden;
  j["dropout"] = dropout;
  j["num_classes"] = num_classes;
  j["head_hidden"] = head_hidden;
  j["input_rows"] = input_rows;
  j["input_cols"] = input_cols;
  j["vit_sniffer"] = vit_sniffer;
  return j.dump(2) + "\n";
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    c.kind = kind_from_name(j.value("kind", std::string("bivtc")));
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.heads = j.value("heads", c.heads);
    c.depth = j.value("depth", c.depth);
    c.patch = j.value("patch", c.patch);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.input_rows = j.value("input_rows", c.input_rows);
    c.input_cols = j.value("input_cols", c.input_cols);
    c.vit_sniffer = j.value("vit_sniffer", c.vit_sniffer);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("model config: ") + e.what());
  }
  return c;
}

namespace {

template <typename T>
Tensor<T> glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(fan_in * fan_out);
  for (T& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>::parameter(Shape{fan_in, fan_out}, std::move(v));
}

template <typename T>
Tensor<T> filled(std::size_t n, T value) {
  return Tensor<T>::parameter(Shape{n}, std::vector<T>(n, value));
}

template <typename T>
VitEncoder<T> make_encoder(const ModelConfig& cfg, Rng& rng) {
  const std::size_t L = cfg.embed_dim;
  VitEncoder<T> enc;
  enc.patch_projection = glorot<T>(rng, cfg.patch * cfg.patch, L);
  std::vector<T> pos(cfg.max_patches() * L);
  for (T& x : pos) x = static_cast<T>(0.02 * rng.normal());
  enc.positional_embedding = Tensor<T>::parameter(Shape{cfg.max_patches(), L}, std::move(pos));
  for (std::size_t d = 0; d < cfg.depth; ++d) {
    TransformerBlock<T> b;
    b.ln1_gain = filled<T>(L, T(1));
    b.ln1_bias = filled<T>(L, T(0));
    const std::size_t head_dim = cfg.heads == 0 ? 0 : L / cfg.heads;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      b.attn.wq.push_back(glorot<T>(rng, L, head_dim));
      b.attn.wk.push_back(glorot<T>(rng, L, head_dim));
      b.attn.wv.push_back(glorot<T>(rng, L, head_dim));
    }
    b.attn.wo = glorot<T>(rng, L, L);
    b.ln2_gain = filled<T>(L, T(1));
    b.ln2_bias = filled<T>(L, T(0));
    b.mlp_w1 = glorot<T>(rng, L, cfg.mlp_hidden);
    b.mlp_b1 = filled<T>(cfg.mlp_hidden, T(0));
    b.mlp_w2 = glorot<T>(rng, cfg.mlp_hidden, L);
    b.mlp_b2 = filled<T>(L, T(0));
    enc.blocks.push_back(std::move(b));
  }
  return enc;
}

template <typename T>
void append_encoder(std::vector<std::pair<std::string, Tensor<T>>>& out, const std::string& prefix,
                    const VitEncoder<T>& enc) {
  out.emplace_back(prefix + ".patch_projection", enc.patch_projection);
  out.emplace_back(prefix + ".positional_embedding", enc.positional_embedding);
  for (std::size_t d = 0; d < enc.blocks.size(); ++d) {
    const auto& b = enc.blocks[d];
    const std::string p = prefix + ".block" + std::to_string(d);
    out.emplace_back(p + ".ln1.gain", b.ln1_gain);
    out.emplace_back(p + ".ln1.bias", b.ln1_bias);
    for (std::size_t h = 0; h < b.attn.wq.size(); ++h) {
      out.emplace_back(p + ".attn.wq" + std::to_string(h), b.attn.wq[h]);
      out.emplace_back(p + ".attn.wk" + std::to_string(h), b.attn.wk[h]);
      out.emplace_back(p + ".attn.wv" + std::to_string(h), b.attn.wv[h]);
    }
    out.emplace_back(p + ".attn.wo", b.attn.wo);
    out.emplace_back(p + ".ln2.gain", b.ln2_gain);
    out.emplace_back(p + ".ln2.bias", b.ln2_bias);
    out.emplace_back(p + ".mlp.w1", b.mlp_w1);
    out.emplace_back(p + ".mlp.b1", b.mlp_b1);
    out.emplace_back(p + ".mlp.w2", b.mlp_w2);
    out.emplace_back(p + ".mlp.b2", b.mlp_b2);
  }
}

}  // namespace

template <typename T>
Classifier<T>::Classifier(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.heads == 0 || cfg.embed_dim % cfg.heads != 0) {
    throw Error(ErrorCode::HeadDivisibility, "embed_dim must be divisible by heads");
  }
  Rng rng(seed);
  const std::size_t streams = cfg.kind == ModelKind::Bivtc ? 2 : 1;
  for (std::size_t i = 0; i < streams; ++i) encoders_.push_back(make_encoder<T>(cfg, rng));
  head_.w1 = glorot<T>(rng, streams * cfg.embed_dim, cfg.head_hidden);
  head_.b1 = filled<T>(cfg.head_hidden, T(0));
  head_.w2 = glorot<T>(rng, cfg.head_hidden, cfg.num_classes);
  head_.b2 = filled<T>(cfg.num_classes, T(0));
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Classifier<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (std::size_t i = 0; i < encoders_.size(); ++i) append_encoder(out, "enc" + std::to_string(i + 1), encoders_[i]);
  out.emplace_back("head.w1", head_.w1);
  out.emplace_back("head.b1", head_.b1);
  out.emplace_back("head.w2", head_.w2);
  out.emplace_back("head.b2", head_.b2);
  return out;
}

template <typename T>
std::vector<Tensor<T>> Classifier<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [_, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename T>
std::size_t Classifier<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : named_parameters()) n += t.size();
  return n;
}

template <typename T>
void Classifier<T>::zero_grad() {
  for (auto& [_, t] : named_parameters()) t.zero_grad();
}

template <typename T>
Tensor<T> Classifier<T>::forward(const preprocess::PatchSet& p1, const preprocess::PatchSet& p2, Rng& rng,
                                 bool train) const {
  Tensor<T> features;
  if (cfg_.kind == ModelKind::Bivtc) {
    const Tensor<T> f1 = vit_forward(p1, encoders_[0], cfg_, rng, train);
    const Tensor<T> f2 = vit_forward(p2, encoders_[1], cfg_, rng, train);
    features = ad::concat_last_dim(f1, f2);
  } else {
    features = vit_forward(cfg_.vit_sniffer == 2 ? p2 : p1, encoders_[0], cfg_, rng, train);
  }
  Tensor<T> hidden = ad::relu(ad::add(ad::matmul(features, head_.w1), head_.b1));
  hidden = ad::dropout(hidden, static_cast<T>(cfg_.dropout), rng, train);
  return ad::add(ad::matmul(hidden, head_.w2), head_.b2);
}

template <typename T>
std::vector<NamedTensor> Classifier<T>::to_checkpoint() const {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : named_parameters()) {
    NamedTensor nt{name, t.shape(), {}};
    nt.values.reserve(t.size());
    for (T v : t.values()) nt.values.push_back(static_cast<float>(v));
    out.push_back(std::move(nt));
  }
  return out;
}

template <typename T>
void Classifier<T>::load_checkpoint(std::span<const NamedTensor> tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  auto params = named_parameters();
  if (by_name.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "checkpoint holds " + std::to_string(by_name.size()) +
                                              " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::ShapeMismatch, "checkpoint lacks tensor '" + name + "'");
    if (it->second->shape != t.shape()) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor '" + name + "' has shape " +
                                                ad::shape_string(it->second->shape) + ", model expects " +
                                                ad::shape_string(t.shape()));
    }
    auto dst = t.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
  }
}

template <typename T>
template <typename U>
Classifier<U> Classifier<T>::cast() const {
  Classifier<U> out(cfg_, 0);
  auto src = named_parameters();
  auto dst = out.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto d = dst[i].second.data();
    const auto s = src[i].second.values();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<U>(s[k]);
  }
  return out;
}

template <typename T>
std::uint64_t Classifier<T>::weight_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (const auto& [name, t] : named_parameters()) {
    for (char c : name) mix(static_cast<std::uint8_t>(c));
    for (T v : t.values()) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) mix(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return h;
}

template <typename T>
Tensor<T> patch_matrix(const preprocess::PatchSet& p) {
  std::vector<T> v(p.values.begin(), p.values.end());
  return Tensor<T>::constant(Shape{p.count, p.patch_area()}, std::move(v));
}

template <typename T>
Tensor<T> embed_patches(const preprocess::PatchSet& p, const VitEncoder<T>& enc, const ModelConfig& cfg, Rng& rng,
                        bool train) {
  if (p.patch != cfg.patch) {
    throw Error(ErrorCode::ShapeMismatch,
                "patch side " + std::to_string(p.patch) + " but model expects " + std::to_string(cfg.patch));
  }
  const std::size_t n_max = enc.positional_embedding.rows();
  if (p.count > n_max) {
    throw Error(ErrorCode::TooManyPatches,
                std::to_string(p.count) + " patches exceed the positional table (" + std::to_string(n_max) + ")");
  }
  const Tensor<T> pos = p.count == n_max ? enc.positional_embedding : ad::slice_rows(enc.positional_embedding, 0, p.count);
  const Tensor<T> tokens = ad::add(ad::matmul(patch_matrix<T>(p), enc.patch_projection), pos);
  return ad::dropout(tokens, static_cast<T>(cfg.dropout), rng, train);
}

template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, const TransformerBlock<T>& b, const ModelConfig& cfg, Rng& rng,
                            bool train) {
  const T p = static_cast<T>(cfg.dropout);
  const Tensor<T> attn = ad::multi_head_attention(ad::layer_norm(x, b.ln1_gain, b.ln1_bias), b.attn);
  const Tensor<T> x1 = ad::add(x, ad::dropout(attn, p, rng, train));
  Tensor<T> h = ad::gelu(ad::add(ad::matmul(ad::layer_norm(x1, b.ln2_gain, b.ln2_bias), b.mlp_w1), b.mlp_b1));
  h = ad::dropout(h, p, rng, train);
  const Tensor<T> mlp = ad::add(ad::matmul(h, b.mlp_w2), b.mlp_b2);
  return ad::add(x1, ad::dropout(mlp, p, rng, train));
}

template <typename T>
Tensor<T> vit_forward(const preprocess::PatchSet& p, const VitEncoder<T>& enc, const ModelConfig& cfg, Rng& rng,
                      bool train) {
  Tensor<T> x = embed_patches(p, enc, cfg, rng, train);
  for (const auto& b : enc.blocks) x = transformer_block(x, b, cfg, rng, train);
  return ad::mean_over_axis(x, 0);
}

template <typename T>
Tensor<T> bivtc_forward(const Sample& s, const Classifier<T>& model, Rng& rng, bool train) {
  if (s.sniffer1.rows != s.sniffer2.rows || s.sniffer1.cols != s.sniffer2.cols) {
    throw Error(ErrorCode::ShapeMismatch, "sniffer windows differ in shape");
  }
  const std::size_t P = model.config().patch;
  return model.forward(preprocess::patchify(s.sniffer1, P), preprocess::patchify(s.sniffer2, P), rng, train);
}

template <typename T>
ActivityLabel predict(std::span<const T> logits) {
  if (logits.size() != kNumClasses) {
    throw Error(ErrorCode::ShapeMismatch, "expected 8 logits, got " + std::to_string(logits.size()));
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) throw Error(ErrorCode::NonFiniteLogits, "logit " + std::to_string(i) + " is not finite");
    if (logits[i] > logits[best]) best = i;
  }
  return label_from_index(best);
}

#define ROBOFI_MODELS_INSTANTIATE(T)                                                                             \
  template class Classifier<T>;                                                                                 \
  template Tensor<T> patch_matrix<T>(const preprocess::PatchSet&);                                              \
  template Tensor<T> embed_patches(const preprocess::PatchSet&, const VitEncoder<T>&, const ModelConfig&, Rng&, \
                                   bool);                                                                       \
  template Tensor<T> transformer_block(const Tensor<T>&, const TransformerBlock<T>&, const ModelConfig&, Rng&,  \
                                       bool);                                                                   \
  template Tensor<T> vit_forward(const preprocess::PatchSet&, const VitEncoder<T>&, const ModelConfig&, Rng&,   \
                                 bool);                                                                         \
  template Tensor<T> bivtc_forward(const Sample&, const Classifier<T>&, Rng&, bool);                            \
  template ActivityLabel predict(std::span<const T>);

ROBOFI_MODELS_INSTANTIATE(float)
ROBOFI_MODELS_INSTANTIATE(double)

template Classifier<double> Classifier<float>::cast<double>() const;
template Classifier<float> Classifier<double>::cast<float>() const;
template Classifier<float> Classifier<float>::cast<float>() const;
template Classifier<double> Classifier<double>::cast<double>() const;

#undef ROBOFI_MODELS_INSTANTIATE

}  // namespace robofi::models

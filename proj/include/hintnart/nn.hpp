#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hintnart/autodiff.hpp"
#include "hintnart/ndarray.hpp"
#include "hintnart/rng.hpp"

namespace hintnart {

// Reserved token ids, fixed across teacher and student.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kReservedIds = 4;

struct ModelConfig {
  std::size_t encoder_layers = 2;  // M
  std::size_t decoder_layers = 2;  // N
  std::size_t heads = 4;           // H
  std::size_t d_model = 32;
  std::size_t d_k = 0;  // 0 -> d_model / heads
  std::size_t d_v = 0;  // 0 -> d_model / heads
  std::size_t d_ff = 64;
  std::size_t vocab_src = 36;
  std::size_t vocab_tgt = 36;
  std::size_t max_len = 64;
  // Attention logits divide by sqrt(d_k) by default; this switches to
  // sqrt(d_model), which only differs when heads > 1.
  bool scale_by_d_model = false;

  std::size_t dk() const { return d_k ? d_k : d_model / heads; }
  std::size_t dv() const { return d_v ? d_v : d_model / heads; }
  void validate() const;
  bool same_skeleton(const ModelConfig& o) const {
    return encoder_layers == o.encoder_layers && decoder_layers == o.decoder_layers &&
           heads == o.heads && d_model == o.d_model;
  }
};

// Parameters and Adam moments live as float32 so checkpoints round-trip the
// in-memory state exactly; all graph arithmetic widens to double.
struct ParamTensor {
  std::vector<std::size_t> shape;
  std::vector<float> value;
  std::vector<float> adam_m;
  std::vector<float> adam_v;
};

class ParamStore {
 public:
  ParamTensor& define(const std::string& name, std::vector<std::size_t> shape);
  ParamTensor& require(const std::string& name);
  const ParamTensor& require(const std::string& name) const;
  bool has(const std::string& name) const { return tensors_.count(name) != 0; }
  std::map<std::string, ParamTensor>& tensors() { return tensors_; }
  const std::map<std::string, ParamTensor>& tensors() const { return tensors_; }
  std::size_t total_values() const;

 private:
  std::map<std::string, ParamTensor> tensors_;
};

// Per-forward binding of store tensors to graph leaves. `trainable` controls
// whether leaves require gradients; dropout fires only when an RNG is set.
// override_values, when set, replaces the float32 store with full-precision
// values — the gradient-check suites perturb parameters at 64-bit.
struct GraphCtx {
  const ParamStore* store = nullptr;
  bool trainable = false;
  double dropout = 0.0;
  Rng* dropout_rng = nullptr;
  const std::map<std::string, NdArray>* override_values = nullptr;
  std::map<std::string, ad::Var> bound;

  ad::Var param(const std::string& name);
  bool dropout_active() const { return dropout_rng != nullptr && dropout > 0.0; }
  ad::Var maybe_dropout(const ad::Var& v);
};

namespace nn {

// e(j, k) = sin(j / 10000^(k/d)) for even k, cos(...) for odd k.
NdArray positional_encoding(std::size_t t, std::size_t d);

struct AttentionResult {
  ad::Var values;   // [T_q, d_model]
  ad::Var weights;  // [H, T_q, T_kv], pre-dropout softmax rows
};

// key_pad, when given, marks key positions whose attention logits are pushed
// to -1e30 (exact zero weight after softmax).
AttentionResult multi_head_attention(GraphCtx& ctx, const std::string& prefix,
                                     const ad::Var& q_in, const ad::Var& k_in,
                                     const ad::Var& v_in, const ModelConfig& cfg,
                                     bool causal, const std::vector<bool>* key_pad);

// Q and K are the sinusoidal positional encodings for prev's length; V = prev.
AttentionResult positional_attention(GraphCtx& ctx, const std::string& prefix,
                                     const ad::Var& prev, const ModelConfig& cfg);

ad::Var ffn(GraphCtx& ctx, const std::string& prefix, const ad::Var& x,
            const ModelConfig& cfg);

// layer_norm(x + dropout(fx)) with learned gain/bias under prefix.
ad::Var sublayer(GraphCtx& ctx, const std::string& prefix, const ad::Var& x,
                 const ad::Var& fx);

// lookup * sqrt(d_model) + positional encoding
ad::Var embed(GraphCtx& ctx, const std::string& table, const std::vector<int>& ids,
              const ModelConfig& cfg);

ad::Var linear(GraphCtx& ctx, const std::string& prefix, const ad::Var& x);

std::vector<bool> pad_mask(const std::vector<int>& ids);

// Deterministic initializers; draw order is the definition order.
void init_projection(ParamStore& store, const std::string& name,
                     std::size_t fan_in, std::size_t fan_out, Rng& rng);
void init_embedding(ParamStore& store, const std::string& name, std::size_t vocab,
                    std::size_t d, Rng& rng);
void init_layer_norm(ParamStore& store, const std::string& prefix, std::size_t d);
void init_linear(ParamStore& store, const std::string& prefix, std::size_t fan_in,
                 std::size_t fan_out, Rng& rng);
void init_attention(ParamStore& store, const std::string& prefix, const ModelConfig& cfg,
                    Rng& rng);

}  // namespace nn
}  // namespace hintnart

#include "hintnart/nn.hpp"

#include <cmath>

#include "hintnart/errors.hpp"

namespace hintnart {

namespace {
constexpr double kMaskedLogit = -1e30;  // exp underflows to exactly 0
}

void ModelConfig::validate() const {
  if (encoder_layers < 1 || decoder_layers < 1 || heads < 1) {
    throw ConfigError("model: layer and head counts must be >= 1");
  }
  if (d_model < 1 || d_ff < 1 || vocab_src < 1 || vocab_tgt < 1 || max_len < 1) {
    throw ConfigError("model: widths and vocabulary sizes must be >= 1");
  }
  if (d_k == 0 && d_model % heads != 0) {
    throw ConfigError("model: d_model must be divisible by heads when d_k is defaulted");
  }
  if (dk() < 1 || dv() < 1) throw ConfigError("model: per-head widths must be >= 1");
}

ParamTensor& ParamStore::define(const std::string& name, std::vector<std::size_t> shape) {
  if (tensors_.count(name)) throw ConfigError("parameter defined twice: " + name);
  ParamTensor t;
  t.shape = std::move(shape);
  const std::size_t n = shape_numel(t.shape);
  t.value.assign(n, 0.0f);
  t.adam_m.assign(n, 0.0f);
  t.adam_v.assign(n, 0.0f);
  return tensors_.emplace(name, std::move(t)).first->second;
}

ParamTensor& ParamStore::require(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const ParamTensor& ParamStore::require(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.value.size();
  return n;
}

ad::Var GraphCtx::param(const std::string& name) {
  auto it = bound.find(name);
  if (it != bound.end()) return it->second;
  if (override_values) {
    auto ov = override_values->find(name);
    if (ov != override_values->end()) {
      ad::Var v = ad::leaf(ov->second, trainable);
      bound.emplace(name, v);
      return v;
    }
  }
  const ParamTensor& t = store->require(name);
  NdArray widened(t.shape);
  for (std::size_t i = 0; i < t.value.size(); ++i) {
    widened.data[i] = static_cast<double>(t.value[i]);
  }
  ad::Var v = ad::leaf(std::move(widened), trainable);
  bound.emplace(name, v);
  return v;
}

ad::Var GraphCtx::maybe_dropout(const ad::Var& v) {
  if (!dropout_active()) return v;
  NdArray mask(v.value().shape);
  const double keep = 1.0 - dropout;
  const double inv_keep = 1.0 / keep;
  for (double& x : mask.data) {
    x = (dropout_rng->uniform() < keep) ? inv_keep : 0.0;
  }
  return ad::mul_const(v, mask);
}

namespace nn {

NdArray positional_encoding(std::size_t t, std::size_t d) {
  NdArray e({t, d});
  for (std::size_t j = 0; j < t; ++j) {
    for (std::size_t k = 0; k < d; ++k) {
      const double angle =
          static_cast<double>(j) *
          std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(d));
      e.at(j, k) = (k % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return e;
}

std::vector<bool> pad_mask(const std::vector<int>& ids) {
  std::vector<bool> mask(ids.size(), false);
  for (std::size_t i = 0; i < ids.size(); ++i) mask[i] = (ids[i] == kPadId);
  return mask;
}

namespace {

// Combined additive mask over [T_q, T_kv]; tiles over heads in add_const.
NdArray build_mask(std::size_t t_q, std::size_t t_kv, bool causal,
                   const std::vector<bool>* key_pad) {
  NdArray m({t_q, t_kv});
  for (std::size_t i = 0; i < t_q; ++i) {
    for (std::size_t j = 0; j < t_kv; ++j) {
      const bool masked = (causal && j > i) || (key_pad && (*key_pad)[j]);
      m.at(i, j) = masked ? kMaskedLogit : 0.0;
    }
  }
  return m;
}

AttentionResult attention_core(GraphCtx& ctx, const std::string& prefix, const ad::Var& q_in,
                               const ad::Var& k_in, const ad::Var& v_in,
                               const ModelConfig& cfg, bool causal,
                               const std::vector<bool>* key_pad) {
  const std::size_t t_q = q_in.value().shape[0];
  const std::size_t t_kv = k_in.value().shape[0];
  const std::size_t h = cfg.heads, dk = cfg.dk(), dv = cfg.dv();

  ad::Var q = ad::matmul(q_in, ctx.param(prefix + ".wq"));  // [T_q, H*dk]
  ad::Var k = ad::matmul(k_in, ctx.param(prefix + ".wk"));
  ad::Var v = ad::matmul(v_in, ctx.param(prefix + ".wv"));  // [T_kv, H*dv]

  q = ad::permute(ad::reshape(q, {t_q, h, dk}), {1, 0, 2});   // [H, T_q, dk]
  k = ad::permute(ad::reshape(k, {t_kv, h, dk}), {1, 2, 0});  // [H, dk, T_kv]
  v = ad::permute(ad::reshape(v, {t_kv, h, dv}), {1, 0, 2});  // [H, T_kv, dv]

  const double denom = cfg.scale_by_d_model ? static_cast<double>(cfg.d_model)
                                            : static_cast<double>(dk);
  ad::Var scores = ad::scale(ad::bmm(q, k), 1.0 / std::sqrt(denom));  // [H, T_q, T_kv]
  if (causal || key_pad) {
    scores = ad::add_const(scores, build_mask(t_q, t_kv, causal, key_pad));
  }
  ad::Var weights = ad::softmax(scores);
  ad::Var applied = ctx.maybe_dropout(weights);

  ad::Var ctx_heads = ad::bmm(applied, v);                         // [H, T_q, dv]
  ctx_heads = ad::reshape(ad::permute(ctx_heads, {1, 0, 2}), {t_q, h * dv});
  ad::Var out = ad::matmul(ctx_heads, ctx.param(prefix + ".wo"));  // [T_q, d_model]
  return {out, weights};
}

}  // namespace

AttentionResult multi_head_attention(GraphCtx& ctx, const std::string& prefix,
                                     const ad::Var& q_in, const ad::Var& k_in,
                                     const ad::Var& v_in, const ModelConfig& cfg,
                                     bool causal, const std::vector<bool>* key_pad) {
  if (q_in.value().shape[1] != cfg.d_model || k_in.value().shape[1] != cfg.d_model ||
      v_in.value().shape[1] != cfg.d_model) {
    throw DimensionError("attention: operand width must be d_model");
  }
  if (k_in.value().shape[0] != v_in.value().shape[0]) {
    throw DimensionError("attention: key/value lengths differ");
  }
  if (causal && q_in.value().shape[0] != k_in.value().shape[0]) {
    throw ContractError("attention: causal mask requires equal query/key lengths");
  }
  return attention_core(ctx, prefix, q_in, k_in, v_in, cfg, causal, key_pad);
}

AttentionResult positional_attention(GraphCtx& ctx, const std::string& prefix,
                                     const ad::Var& prev, const ModelConfig& cfg) {
  const std::size_t t = prev.value().shape[0];
  ad::Var pos = ad::constant(positional_encoding(t, cfg.d_model));
  return attention_core(ctx, prefix, pos, pos, prev, cfg, /*causal=*/false, nullptr);
}

ad::Var ffn(GraphCtx& ctx, const std::string& prefix, const ad::Var& x,
            const ModelConfig& cfg) {
  (void)cfg;
  ad::Var h = linear(ctx, prefix + ".fc1", x);
  h = ad::relu(h);
  return linear(ctx, prefix + ".fc2", h);
}

ad::Var sublayer(GraphCtx& ctx, const std::string& prefix, const ad::Var& x,
                 const ad::Var& fx) {
  if (!x.value().same_shape(fx.value())) {
    throw DimensionError("sublayer: inner function must preserve shape");
  }
  ad::Var summed = ad::add(x, ctx.maybe_dropout(fx));
  return ad::layer_norm(summed, ctx.param(prefix + ".ln_g"), ctx.param(prefix + ".ln_b"));
}

ad::Var embed(GraphCtx& ctx, const std::string& table, const std::vector<int>& ids,
              const ModelConfig& cfg) {
  ad::Var e = ad::gather_rows(ctx.param(table), ids);
  e = ad::scale(e, std::sqrt(static_cast<double>(cfg.d_model)));
  return ad::add_const(e, positional_encoding(ids.size(), cfg.d_model));
}

ad::Var linear(GraphCtx& ctx, const std::string& prefix, const ad::Var& x) {
  ad::Var out = ad::matmul(x, ctx.param(prefix + ".w"));
  return ad::add_rowwise(out, ctx.param(prefix + ".b"));
}

void init_projection(ParamStore& store, const std::string& name, std::size_t fan_in,
                     std::size_t fan_out, Rng& rng) {
  ParamTensor& t = store.define(name, {fan_in, fan_out});
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (float& v : t.value) v = static_cast<float>(rng.uniform(-bound, bound));
}

void init_embedding(ParamStore& store, const std::string& name, std::size_t vocab,
                    std::size_t d, Rng& rng) {
  ParamTensor& t = store.define(name, {vocab, d});
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  for (float& v : t.value) v = static_cast<float>(rng.normal(0.0, stddev));
}

void init_layer_norm(ParamStore& store, const std::string& prefix, std::size_t d) {
  ParamTensor& g = store.define(prefix + ".ln_g", {d});
  for (float& v : g.value) v = 1.0f;
  store.define(prefix + ".ln_b", {d});
}

void init_linear(ParamStore& store, const std::string& prefix, std::size_t fan_in,
                 std::size_t fan_out, Rng& rng) {
  init_projection(store, prefix + ".w", fan_in, fan_out, rng);
  store.define(prefix + ".b", {fan_out});
}

void init_attention(ParamStore& store, const std::string& prefix, const ModelConfig& cfg,
                    Rng& rng) {
  init_projection(store, prefix + ".wq", cfg.d_model, cfg.heads * cfg.dk(), rng);
  init_projection(store, prefix + ".wk", cfg.d_model, cfg.heads * cfg.dk(), rng);
  init_projection(store, prefix + ".wv", cfg.d_model, cfg.heads * cfg.dv(), rng);
  init_projection(store, prefix + ".wo", cfg.heads * cfg.dv(), cfg.d_model, rng);
  init_layer_norm(store, prefix, cfg.d_model);
}

}  // namespace nn
}  // namespace hintnart

#include "hintnart/teacher.hpp"

#include <algorithm>
#include <cmath>

#include "hintnart/errors.hpp"

namespace hintnart {

std::size_t argmax_row(const double* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

TeacherModel::TeacherModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(init_seed);
  nn::init_embedding(params_, "src_emb", cfg_.vocab_src, cfg_.d_model, rng);
  nn::init_embedding(params_, "tgt_emb", cfg_.vocab_tgt, cfg_.d_model, rng);
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    nn::init_attention(params_, p + ".self", cfg_, rng);
    nn::init_linear(params_, p + ".ffn.fc1", cfg_.d_model, cfg_.d_ff, rng);
    nn::init_linear(params_, p + ".ffn.fc2", cfg_.d_ff, cfg_.d_model, rng);
    nn::init_layer_norm(params_, p + ".ffn", cfg_.d_model);
  }
  for (std::size_t l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    nn::init_attention(params_, p + ".self", cfg_, rng);
    nn::init_attention(params_, p + ".ctx", cfg_, rng);
    nn::init_linear(params_, p + ".ffn.fc1", cfg_.d_model, cfg_.d_ff, rng);
    nn::init_linear(params_, p + ".ffn.fc2", cfg_.d_ff, cfg_.d_model, rng);
    nn::init_layer_norm(params_, p + ".ffn", cfg_.d_model);
  }
  nn::init_linear(params_, "out", cfg_.d_model, cfg_.vocab_tgt, rng);
}

void TeacherModel::check_src(const std::vector<int>& src) const {
  if (src.empty()) throw InputError("encode: empty source");
  if (src.size() > cfg_.max_len) throw InputError("encode: source longer than max_len");
  for (int id : src) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_src) {
      throw InputError("encode: source id " + std::to_string(id) + " out of vocabulary");
    }
  }
}

void TeacherModel::check_tgt(const std::vector<int>& tgt) const {
  if (tgt.empty()) throw InputError("forced_decode: empty target");
  if (tgt.size() > cfg_.max_len) throw InputError("forced_decode: target longer than max_len");
  for (int id : tgt) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_tgt) {
      throw InputError("forced_decode: target id " + std::to_string(id) +
                       " out of vocabulary");
    }
  }
}

ad::Var TeacherModel::encode_graph(GraphCtx& ctx, const std::vector<int>& src) const {
  check_src(src);
  const std::vector<bool> src_pad = nn::pad_mask(src);
  ad::Var h = nn::embed(ctx, "src_emb", src, cfg_);
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    auto attn = nn::multi_head_attention(ctx, p + ".self", h, h, h, cfg_,
                                         /*causal=*/false, &src_pad);
    h = nn::sublayer(ctx, p + ".self", h, attn.values);
    h = nn::sublayer(ctx, p + ".ffn", h, nn::ffn(ctx, p + ".ffn", h, cfg_));
  }
  return h;
}

namespace {

struct DecodeOut {
  ad::Var logits;
  std::vector<ad::Var> hidden;
  std::vector<ad::Var> enc_dec_attn;
  std::vector<ad::Var> dec_self_attn;
};

}  // namespace

// Decoder stack over a fixed encoder output; dec_in already shifted.
static DecodeOut run_decoder(GraphCtx& ctx, const ModelConfig& cfg, const ad::Var& enc_out,
                             const std::vector<bool>& src_pad, const std::vector<int>& dec_in) {
  DecodeOut out;
  const std::vector<bool> tgt_pad = nn::pad_mask(dec_in);
  ad::Var h = nn::embed(ctx, "tgt_emb", dec_in, cfg);
  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    auto self = nn::multi_head_attention(ctx, p + ".self", h, h, h, cfg,
                                         /*causal=*/true, &tgt_pad);
    out.dec_self_attn.push_back(self.weights);
    h = nn::sublayer(ctx, p + ".self", h, self.values);
    auto cross = nn::multi_head_attention(ctx, p + ".ctx", h, enc_out, enc_out, cfg,
                                          /*causal=*/false, &src_pad);
    out.enc_dec_attn.push_back(cross.weights);
    h = nn::sublayer(ctx, p + ".ctx", h, cross.values);
    h = nn::sublayer(ctx, p + ".ffn", h, nn::ffn(ctx, p + ".ffn", h, cfg));
    out.hidden.push_back(h);
  }
  out.logits = nn::linear(ctx, "out", h);
  return out;
}

TeacherModel::Forward TeacherModel::forced_forward(GraphCtx& ctx, const std::vector<int>& src,
                                                   const std::vector<int>& tgt) const {
  check_src(src);
  check_tgt(tgt);
  Forward fwd;

  const std::vector<bool> src_pad = nn::pad_mask(src);
  {
    ad::Var h = nn::embed(ctx, "src_emb", src, cfg_);
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      const std::string p = "enc.l" + std::to_string(l);
      auto attn = nn::multi_head_attention(ctx, p + ".self", h, h, h, cfg_,
                                           /*causal=*/false, &src_pad);
      fwd.enc_self_attn.push_back(attn.weights);
      h = nn::sublayer(ctx, p + ".self", h, attn.values);
      h = nn::sublayer(ctx, p + ".ffn", h, nn::ffn(ctx, p + ".ffn", h, cfg_));
    }
    fwd.encoder_out = h;
  }

  std::vector<int> dec_in(tgt.size());
  dec_in[0] = kBosId;
  for (std::size_t t = 1; t < tgt.size(); ++t) dec_in[t] = tgt[t - 1];

  DecodeOut dec = run_decoder(ctx, cfg_, fwd.encoder_out, src_pad, dec_in);
  fwd.logits = dec.logits;
  fwd.decoder_hidden = std::move(dec.hidden);
  fwd.enc_dec_attn = std::move(dec.enc_dec_attn);
  fwd.dec_self_attn = std::move(dec.dec_self_attn);
  return fwd;
}

NdArray TeacherModel::encode(const std::vector<int>& src) const {
  GraphCtx ctx{&params_};
  return encode_graph(ctx, src).value();
}

DecoderTrace TeacherModel::forced_decode(const std::vector<int>& src,
                                         const std::vector<int>& tgt) const {
  GraphCtx ctx{&params_};
  Forward fwd = forced_forward(ctx, src, tgt);
  DecoderTrace trace;
  for (const auto& h : fwd.decoder_hidden) trace.hidden.push_back(h.value());
  for (const auto& a : fwd.enc_dec_attn) trace.attn.push_back(a.value());
  trace.logits = fwd.logits.value();
  return trace;
}

std::vector<int> TeacherModel::greedy_decode(const std::vector<int>& src,
                                             std::size_t max_len) const {
  if (max_len > cfg_.max_len) throw InputError("greedy_decode: max_len exceeds model limit");
  GraphCtx enc_ctx{&params_};
  const ad::Var enc_out = ad::constant(encode_graph(enc_ctx, src).value());
  const std::vector<bool> src_pad = nn::pad_mask(src);

  std::vector<int> out;
  std::vector<int> dec_in{kBosId};
  while (out.size() < max_len) {
    GraphCtx ctx{&params_};
    DecodeOut dec = run_decoder(ctx, cfg_, enc_out, src_pad, dec_in);
    const NdArray& logits = dec.logits.value();
    const std::size_t last = dec_in.size() - 1;
    const int next = static_cast<int>(
        argmax_row(logits.data.data() + last * cfg_.vocab_tgt, cfg_.vocab_tgt));
    if (next == kEosId) break;
    out.push_back(next);
    dec_in.push_back(next);
    ++sequential_steps_;
  }
  return out;
}

double TeacherModel::score_sequence(const std::vector<int>& src,
                                    const std::vector<int>& tgt) const {
  GraphCtx ctx{&params_};
  Forward fwd = forced_forward(ctx, src, tgt);
  const NdArray& logits = fwd.logits.value();
  const std::size_t v = cfg_.vocab_tgt;
  double total = 0.0;
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    const double* row = logits.data.data() + t * v;
    const double m = *std::max_element(row, row + v);
    double s = 0.0;
    for (std::size_t i = 0; i < v; ++i) s += std::exp(row[i] - m);
    total += row[tgt[t]] - m - std::log(s);
  }
  return total;
}

}  // namespace hintnart

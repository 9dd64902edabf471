#include "hintnart/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "hintnart/errors.hpp"
#include "hintnart/nn.hpp"
#include "hintnart/rng.hpp"

namespace hintnart {

namespace {
const char* kReservedTokens[kReservedIds] = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.empty()) {
    for (const char* t : kReservedTokens) tokens.emplace_back(t);
  }
  if (tokens.size() < kReservedIds) {
    throw InputError("vocabulary: reserved entries missing");
  }
  id_to_token_ = std::move(tokens);
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], static_cast<int>(i)).second) {
      throw InputError("vocabulary: duplicate token " + id_to_token_[i]);
    }
  }
}

Vocabulary Vocabulary::build(const std::vector<Counted>& counts) {
  std::vector<Counted> sorted = counts;
  std::sort(sorted.begin(), sorted.end(), [](const Counted& a, const Counted& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.token < b.token;
  });
  std::vector<std::string> tokens;
  for (const char* t : kReservedTokens) tokens.emplace_back(t);
  for (const Counted& c : sorted) tokens.push_back(c.token);
  return Vocabulary(std::move(tokens));
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int tid) const {
  if (tid < 0 || static_cast<std::size_t>(tid) >= id_to_token_.size()) {
    throw InputError("vocabulary: id out of range");
  }
  return id_to_token_[static_cast<std::size_t>(tid)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<int> out(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) out[i] = id(words[i]);
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = token(ids[i]);
  return out;
}

Vocabulary build_vocabulary(const Corpus& corpus) {
  std::unordered_map<std::string, std::size_t> freq;
  for (const SentencePair& p : corpus.pairs) {
    for (const std::string& t : p.src) ++freq[t];
    for (const std::string& t : p.tgt) ++freq[t];
  }
  std::vector<Vocabulary::Counted> counts;
  counts.reserve(freq.size());
  for (const auto& [token, count] : freq) counts.push_back({token, count});
  return Vocabulary::build(counts);
}

TokenCorpus tokenize_corpus(const Corpus& corpus, const Vocabulary& vocab) {
  TokenCorpus out;
  out.reserve(corpus.pairs.size());
  for (const SentencePair& p : corpus.pairs) {
    out.push_back({vocab.encode(p.src), vocab.encode(p.tgt)});
  }
  return out;
}

void SyntheticTaskSpec::validate() const {
  if (vocab_size < 8) throw ConfigError("data: vocab_size must be >= 8");
  if (len_min < 1 || len_max < len_min) throw ConfigError("data: bad length range");
  if (reorder_window < 1) throw ConfigError("data: reorder_window must be >= 1");
  if (train_size < 1) throw ConfigError("data: train_size must be >= 1");
}

std::string synthetic_token(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%02zu", index);
  return buf;
}

std::unordered_map<std::string, std::string> synthetic_substitution(
    const SyntheticTaskSpec& spec) {
  std::vector<std::size_t> perm(spec.vocab_size);
  for (std::size_t i = 0; i < spec.vocab_size; ++i) perm[i] = i;
  if (spec.mapping_seed != 0) {
    Rng rng(spec.mapping_seed);
    for (std::size_t i = spec.vocab_size; i-- > 1;) {
      std::swap(perm[i], perm[rng.below(i + 1)]);
    }
  }
  std::unordered_map<std::string, std::string> subst;
  for (std::size_t i = 0; i < spec.vocab_size; ++i) {
    subst[synthetic_token(i)] = synthetic_token(perm[i]);
  }
  return subst;
}

namespace {

std::vector<std::string> synthetic_target_with(
    const std::vector<std::string>& src, const SyntheticTaskSpec& spec,
    const std::unordered_map<std::string, std::string>& subst) {
  // lengthen: append one function token per append_every source tokens
  std::vector<std::string> out = src;
  if (spec.append_every > 0) {
    const std::size_t extra = src.size() / spec.append_every;
    const std::string fn_token = synthetic_token(spec.vocab_size - 1);
    for (std::size_t i = 0; i < extra; ++i) out.push_back(fn_token);
  }
  // reorder: reverse adjacent windows (the tail keeps its partial window)
  const std::size_t w = spec.reorder_window;
  for (std::size_t start = 0; start < out.size(); start += w) {
    const std::size_t end = std::min(start + w, out.size());
    std::reverse(out.begin() + static_cast<std::ptrdiff_t>(start),
                 out.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // substitute
  for (std::string& t : out) t = subst.at(t);
  return out;
}

}  // namespace

std::vector<std::string> synthetic_target(const std::vector<std::string>& src,
                                          const SyntheticTaskSpec& spec) {
  return synthetic_target_with(src, spec, synthetic_substitution(spec));
}

CorpusTriple generate_synthetic(const SyntheticTaskSpec& spec) {
  spec.validate();
  const auto subst = synthetic_substitution(spec);

  Rng rng(spec.seed);
  std::set<std::vector<std::string>> seen;
  const std::size_t total = spec.train_size + spec.valid_size + spec.test_size;
  std::vector<SentencePair> pairs;
  pairs.reserve(total);
  // Uniform sources, de-duplicated so the three splits stay disjoint.
  std::size_t attempts = 0;
  while (pairs.size() < total) {
    if (++attempts > 1000 * total) {
      throw ConfigError("data: task space too small for requested corpus sizes");
    }
    const std::size_t len = spec.len_min + rng.below(spec.len_max - spec.len_min + 1);
    std::vector<std::string> src(len);
    for (std::string& t : src) t = synthetic_token(rng.below(spec.vocab_size));
    if (!seen.insert(src).second) continue;
    SentencePair p;
    p.src = src;
    p.tgt = synthetic_target_with(src, spec, subst);
    pairs.push_back(std::move(p));
  }

  CorpusTriple out;
  out.train.pairs.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(spec.train_size));
  out.valid.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(spec.train_size),
                         pairs.begin() + static_cast<std::ptrdiff_t>(spec.train_size + spec.valid_size));
  out.test.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(spec.train_size + spec.valid_size),
                        pairs.end());
  return out;
}

namespace {

std::vector<std::string> split_on_spaces(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

Corpus load_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open corpus: " + path);
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t tab1 = line.find('\t');
    if (tab1 == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": missing tab separator");
    }
    const std::size_t tab2 = line.find('\t', tab1 + 1);
    SentencePair p;
    p.src = split_on_spaces(line.substr(0, tab1));
    if (tab2 == std::string::npos) {
      p.tgt = split_on_spaces(line.substr(tab1 + 1));
    } else {
      p.tgt = split_on_spaces(line.substr(tab1 + 1, tab2 - tab1 - 1));
      p.ref = split_on_spaces(line.substr(tab2 + 1));
    }
    if (p.src.empty() || p.tgt.empty()) {
      ++corpus.skipped;
      continue;
    }
    corpus.pairs.push_back(std::move(p));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::string out;
  for (const SentencePair& p : corpus.pairs) {
    out += join(p.src);
    out += '\t';
    out += join(p.tgt);
    if (!p.ref.empty()) {
      out += '\t';
      out += join(p.ref);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

void write_text_file(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot open for writing: " + tmp);
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw InputError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw InputError("rename failed: " + path);
  }
}

}  // namespace hintnart

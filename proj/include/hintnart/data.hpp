#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace hintnart {

// One token table shared by source and target sides. Non-reserved entries
// are ordered by descending corpus frequency, ties broken by token text.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);  // full table incl. reserved

  struct Counted {
    std::string token;
    std::size_t count;
  };
  static Vocabulary build(const std::vector<Counted>& counts);

  int id(const std::string& token) const;  // kUnkId for unknown
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

struct SentencePair {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
  std::vector<std::string> ref;  // optional third column (original target)
};

struct Corpus {
  std::vector<SentencePair> pairs;
  std::size_t skipped = 0;  // lines dropped for an empty side
};

struct TokenPair {
  std::vector<int> src;
  std::vector<int> tgt;
};
using TokenCorpus = std::vector<TokenPair>;

Vocabulary build_vocabulary(const Corpus& corpus);
TokenCorpus tokenize_corpus(const Corpus& corpus, const Vocabulary& vocab);

// Deterministic toy translation task: uniform random sources; targets are
// substitute(reorder(lengthen(source))). Exercises reordering and length
// change, the phenomena the hint losses are aimed at.
struct SyntheticTaskSpec {
  std::size_t vocab_size = 32;  // content tokens, reserved ids excluded
  std::size_t len_min = 3;
  std::size_t len_max = 12;
  std::uint64_t mapping_seed = 7;  // 0 = identity substitution
  std::size_t reorder_window = 2;  // adjacent blocks of this size reversed
  std::size_t append_every = 4;    // one function token per this many source tokens; 0 = off
  std::size_t train_size = 1500;
  std::size_t valid_size = 200;
  std::size_t test_size = 200;
  std::uint64_t seed = 11;

  void validate() const;
};

struct CorpusTriple {
  Corpus train, valid, test;
};

CorpusTriple generate_synthetic(const SyntheticTaskSpec& spec);

// The task's deterministic mapping applied to one source sentence.
std::vector<std::string> synthetic_target(const std::vector<std::string>& src,
                                          const SyntheticTaskSpec& spec);
std::string synthetic_token(std::size_t index);

// UTF-8 text, one pair per line: "src<TAB>tgt" or "src<TAB>tgt<TAB>ref",
// tokens separated by single spaces. Lines with an empty side are skipped
// and counted; a line without a tab is a parse error.
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);  // atomic

void write_text_file(const std::string& path, const std::string& contents);  // atomic

}  // namespace hintnart

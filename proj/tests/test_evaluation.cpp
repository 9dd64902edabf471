#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hintnart/errors.hpp"
#include "hintnart/evaluation.hpp"
#include "hintnart/losses.hpp"
#include "testutil.hpp"

using namespace hintnart;
namespace tu = testutil;

namespace {

std::vector<std::vector<int>> sentences(std::initializer_list<std::vector<int>> xs) {
  return {xs};
}

}  // namespace

TEST_CASE("bleu fixtures") {
  SUBCASE("perfect match scores 1") {
    const auto h = sentences({{1, 2, 3, 4, 5}, {7, 8}});
    CHECK(bleu(h, h) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("short hypothesis pays only the brevity penalty") {
    // hyp "a b c" vs ref "a b c d": all available precisions are 1,
    // the 4-gram order drops out, BP = exp(1 - 4/3)
    const double got = bleu(sentences({{1, 2, 3}}), sentences({{1, 2, 3, 4}}));
    CHECK(got == doctest::Approx(std::exp(1.0 - 4.0 / 3.0)).epsilon(1e-9));  // 0.7165
  }

  SUBCASE("modified precision clips repeated tokens") {
    // hyp "a a" vs ref "a b": p1 = 1/2 after clipping; the zero bigram
    // precision smooths to 1/2; geometric mean 1/2, BP 1
    const double got = bleu(sentences({{1, 1}}), sentences({{1, 2}}));
    CHECK(got == doctest::Approx(0.5).epsilon(1e-9));
  }

  SUBCASE("no unigram overlap scores zero") {
    CHECK(bleu(sentences({{1, 2}}), sentences({{3, 4}})) == 0.0);
  }

  SUBCASE("corpus BLEU is invariant to sentence order") {
    std::vector<std::vector<int>> h{{1, 2, 3}, {4, 5}, {6, 7, 8, 9}};
    std::vector<std::vector<int>> r{{1, 2, 4}, {4, 5}, {6, 8, 8, 9}};
    const double forward = bleu(h, r);
    std::reverse(h.begin(), h.end());
    std::reverse(r.begin(), r.end());
    CHECK(bleu(h, r) == doctest::Approx(forward).epsilon(1e-12));
  }

  SUBCASE("input validation") {
    CHECK_THROWS_AS(bleu({}, {}), InputError);
    CHECK_THROWS_AS(bleu(sentences({{1}}), sentences({{1}, {2}})), InputError);
    CHECK_THROWS_AS(bleu(sentences({{1}}), sentences({{}})), InputError);
  }

  SUBCASE("string and id corpora agree") {
    const double ids = bleu(sentences({{1, 2, 3}}), sentences({{1, 2, 4}}));
    const double strs = bleu_str({{"a", "b", "c"}}, {{"a", "b", "d"}});
    CHECK(ids == doctest::Approx(strs).epsilon(1e-12));
  }
}

TEST_CASE("repetition rates") {
  CHECK(repetition_rate({1, 2, 3}) == 0.0);
  CHECK(repetition_rate({1, 1, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(repetition_rate({1, 1, 1, 1}) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK_THROWS_AS(repetition_rate({}), ContractError);

  // invariant under injective relabeling
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> toks(1 + rng.below(12));
    for (int& t : toks) t = static_cast<int>(rng.below(6));
    std::vector<int> relabeled(toks.size());
    for (std::size_t i = 0; i < toks.size(); ++i) relabeled[i] = 100 + 7 * toks[i];
    CHECK(repetition_rate(toks) == repetition_rate(relabeled));
    CHECK(repetition_rate_any(toks) == repetition_rate_any(relabeled));
  }

  // the any-duplicate variant counts non-adjacent repeats too
  CHECK(repetition_rate({1, 2, 1}) == 0.0);
  CHECK(repetition_rate_any({1, 2, 1}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("similarity matrices") {
  DecoderTrace trace;
  trace.hidden.push_back(NdArray({3, 4}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0}));
  trace.hidden.push_back(NdArray({3, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0}));

  SUBCASE("identical rows give the all-ones matrix") {
    const SimilarityMatrix m = similarity_matrix(trace, 1, "teacher");
    CHECK(m.layer == 1);
    for (double v : m.mat.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("orthogonal rows give the identity matrix") {
    const SimilarityMatrix m = similarity_matrix(trace, 2, "teacher");
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(m.mat.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
      }
    }
  }

  SUBCASE("random traces match a naive double-loop oracle") {
    Rng rng(5);
    DecoderTrace random_trace;
    random_trace.hidden.push_back(tu::random_array(rng, {5, 6}));
    const SimilarityMatrix m = similarity_matrix(random_trace, 1, "student");
    const NdArray& rows = random_trace.hidden[0];
    for (std::size_t i = 0; i < 5; ++i) {
      // symmetry and unit diagonal
      CHECK(m.mat.at(i, i) == doctest::Approx(1.0).epsilon(1e-9));
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(std::abs(m.mat.at(i, j) - m.mat.at(j, i)) < 1e-9);
        double dot = 0.0, ni = 0.0, nj = 0.0;
        for (std::size_t k = 0; k < 6; ++k) {
          dot += rows.at(i, k) * rows.at(j, k);
          ni += rows.at(i, k) * rows.at(i, k);
          nj += rows.at(j, k) * rows.at(j, k);
        }
        const double want = i == j ? 1.0 : dot / std::sqrt(ni * nj);
        CHECK(std::abs(m.mat.at(i, j) - want) < 1e-9);
      }
    }
  }

  SUBCASE("degenerate sizes") {
    DecoderTrace t1;
    t1.hidden.push_back(NdArray({1, 4}, {1, 2, 3, 4}));
    const SimilarityMatrix m = similarity_matrix(t1, 1, "x");
    CHECK(m.mat.shape == std::vector<std::size_t>{1, 1});
    CHECK(m.mat.data[0] == 1.0);
    CHECK_THROWS_AS(similarity_matrix(t1, 2, "x"), InputError);
    CHECK_THROWS_AS(similarity_matrix(t1, 0, "x"), InputError);
  }
}

TEST_CASE("similarity quantiles") {
  auto matrix_of = [](std::size_t t, double offdiag) {
    SimilarityMatrix m;
    m.mat = NdArray::full({t, t}, offdiag);
    for (std::size_t i = 0; i < t; ++i) m.mat.at(i, i) = 1.0;
    return m;
  };

  SUBCASE("identity matrices sit entirely below 0.25") {
    const SimilarityQuantiles q = similarity_quantiles({matrix_of(4, 0.0), matrix_of(3, 0.0)});
    CHECK(q.frac_below_025 == 1.0);
    CHECK(q.frac_below_05 == 1.0);
    CHECK(q.count == 6 + 3);
  }

  SUBCASE("all-ones matrices never drop below 0.5") {
    const SimilarityQuantiles q = similarity_quantiles({matrix_of(4, 1.0)});
    CHECK(q.frac_below_025 == 0.0);
    CHECK(q.frac_below_05 == 0.0);
  }

  SUBCASE("mixed construction matches its arithmetic") {
    // 6 entries at 0.1 and 3 entries at 0.6: 2/3 below 0.25 and below 0.5
    const SimilarityQuantiles q =
        similarity_quantiles({matrix_of(4, 0.1), matrix_of(3, 0.6)});
    CHECK(q.frac_below_025 == doctest::Approx(6.0 / 9.0).epsilon(1e-12));
    CHECK(q.frac_below_05 == doctest::Approx(6.0 / 9.0).epsilon(1e-12));
    REQUIRE(q.grid.size() == 21);
    CHECK(q.grid.front() == doctest::Approx(0.1));
    CHECK(q.grid.back() == doctest::Approx(0.6));
  }
}

TEST_CASE("attention export and parse round-trip") {
  Rng rng(7);
  DecoderTrace trace;
  // one layer, two heads, rows are distributions
  NdArray attn({2, 3, 4});
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t t = 0; t < 3; ++t) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        const double v = rng.uniform(0.05, 1.0);
        attn.at(h, t, j) = v;
        sum += v;
      }
      for (std::size_t j = 0; j < 4; ++j) attn.at(h, t, j) /= sum;
    }
  }
  trace.attn.push_back(attn);

  const NdArray head = attention_head(trace, 1, 2);
  CHECK(head.shape == std::vector<std::size_t>{3, 4});
  for (std::size_t t = 0; t < 3; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += head.at(t, j);
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(attention_head(trace, 2, 1), InputError);
  CHECK_THROWS_AS(attention_head(trace, 1, 3), InputError);

  const std::vector<std::string> src{"s1", "s2", "s3", "s4"};
  const std::vector<std::string> tgt{"t1", "t2", "t3"};
  const std::string text = format_grid(head, src, tgt, 1, 2, "teacher");
  const ParsedGrid parsed = parse_grid(text);
  CHECK(parsed.rows == 3);
  CHECK(parsed.cols == 4);
  CHECK(parsed.layer == 1);
  CHECK(parsed.head == 2);
  CHECK(parsed.model_tag == "teacher");
  CHECK(parsed.col_tokens == src);
  CHECK(parsed.row_tokens == tgt);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(parsed.values.at(t, j) - head.at(t, j)) < 5e-7);  // 6 decimals
    }
  }
}

TEST_CASE("mean row entropy of a uniform matrix is log n") {
  NdArray rows = NdArray::full({3, 8}, 0.125);
  CHECK(mean_row_entropy(rows) == doctest::Approx(std::log(8.0)).epsilon(1e-12));
  NdArray peark({1, 4}, {1.0, 0.0, 0.0, 0.0});
  CHECK(mean_row_entropy(peark) == 0.0);
}

TEST_CASE("eval report renders tab-separated keys") {
  EvalReport report;
  report.bleu_score = 0.5;
  report.sentences = 3;
  const std::string text = report.to_text();
  CHECK(text.find("bleu\t0.5\n") != std::string::npos);
  CHECK(text.find("bleu_x100\t50\n") != std::string::npos);
  CHECK(text.find("repetition_adjacent\t") != std::string::npos);
}

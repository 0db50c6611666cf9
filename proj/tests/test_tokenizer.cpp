#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "uvlm/data.hpp"
#include "uvlm/tokenizer.hpp"

using namespace uvlm;

TEST_CASE("split detaches trailing punctuation, keeps hyphens") {
  auto words = Tokenizer::split("how old am i?");
  REQUIRE(words.size() == 5);
  CHECK(words[3] == "i");
  CHECK(words[4] == "?");
  words = Tokenizer::split("approximately 20-29 years old.");
  REQUIRE(words.size() == 5);
  CHECK(words[1] == "20-29");
  CHECK(words[4] == ".");
}

TEST_CASE("reserved ids are fixed and first") {
  Tokenizer t = Tokenizer::build({"b a c"});
  CHECK(Tokenizer::kPad == 0);
  CHECK(Tokenizer::kBos == 1);
  CHECK(Tokenizer::kEos == 2);
  CHECK(Tokenizer::kSep == 3);
  CHECK(Tokenizer::kUnk == 4);
  CHECK(t.vocab_size() == 5 + 3);
  // corpus words sorted after the reserved block
  CHECK(t.encode("a b c") == std::vector<int>{5, 6, 7});
}

TEST_CASE("decode-encode round-trips on the corpus alphabet") {
  std::vector<std::string> texts = corpus_alphabet_texts();
  REQUIRE(!texts.empty());
  Tokenizer t = Tokenizer::build(texts);
  for (const std::string& s : texts) {
    std::vector<int> ids = t.encode(s);
    for (int id : ids) CHECK(id != Tokenizer::kUnk);
    CHECK(t.decode(ids) == s);
  }
}

TEST_CASE("out-of-vocabulary words map to UNK") {
  Tokenizer t = Tokenizer::build({"hello world"});
  std::vector<int> ids = t.encode("hello zebra");
  REQUIRE(ids.size() == 2);
  CHECK(ids[1] == Tokenizer::kUnk);
}

TEST_CASE("vocabulary round-trips through from_vocabulary") {
  Tokenizer t = Tokenizer::build(corpus_alphabet_texts());
  Tokenizer u = Tokenizer::from_vocabulary(t.vocabulary());
  CHECK(u.vocab_size() == t.vocab_size());
  CHECK(u.encode("The person appears to be white male, approximately 0-2 "
                 "years old.") ==
        t.encode("The person appears to be white male, approximately 0-2 "
                 "years old."));
}

TEST_CASE("decode skips control tokens") {
  Tokenizer t = Tokenizer::build({"x"});
  std::vector<int> ids = {Tokenizer::kBos, 5, Tokenizer::kEos};
  CHECK(t.decode(ids) == "x");
}

#pragma once

#include <map>
#include <string>
#include <vector>

#include "uvlm/errors.hpp"

namespace uvlm {

// Word-level tokenizer over the synthetic corpus. Splits on whitespace and
// detaches trailing sentence punctuation; hyphenated tokens ("20-29") stay
// whole. Out-of-vocabulary words map to UNK, so decode-encode round-trips
// exactly on the corpus alphabet.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;
  static constexpr int kUnk = 4;

  Tokenizer() = default;

  // Vocabulary = reserved ids followed by the corpus words in sorted order.
  static Tokenizer build(const std::vector<std::string>& corpus);

  static std::vector<std::string> split(const std::string& text);

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  size_t vocab_size() const { return id_to_word_.size(); }
  const std::vector<std::string>& vocabulary() const { return id_to_word_; }

  static Tokenizer from_vocabulary(std::vector<std::string> words);

 private:
  static bool is_punct(const std::string& w) {
    return w.size() == 1 && (w == "." || w == "," || w == "?" || w == "!" ||
                             w == ":" || w == ";");
  }

  std::vector<std::string> id_to_word_;
  std::map<std::string, int> word_to_id_;
};

}  // namespace uvlm

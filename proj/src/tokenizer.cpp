#include "uvlm/tokenizer.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace uvlm {

std::vector<std::string> Tokenizer::split(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string word;
  while (is >> word) {
    // peel trailing punctuation (possibly several, e.g. "old.," never occurs
    // in the corpus but is handled anyway)
    std::vector<std::string> tail;
    while (!word.empty()) {
      char c = word.back();
      if (c == '.' || c == ',' || c == '?' || c == '!' || c == ':' ||
          c == ';') {
        tail.push_back(std::string(1, c));
        word.pop_back();
      } else {
        break;
      }
    }
    if (!word.empty()) out.push_back(word);
    for (auto it = tail.rbegin(); it != tail.rend(); ++it) out.push_back(*it);
  }
  return out;
}

Tokenizer Tokenizer::build(const std::vector<std::string>& corpus) {
  std::set<std::string> words;
  for (const std::string& text : corpus) {
    for (const std::string& w : split(text)) words.insert(w);
  }
  std::vector<std::string> vocab(words.begin(), words.end());
  return from_vocabulary(std::move(vocab));
}

Tokenizer Tokenizer::from_vocabulary(std::vector<std::string> words) {
  static const std::vector<std::string> reserved = {"<pad>", "<bos>", "<eos>",
                                                    "<sep>", "<unk>"};
  Tokenizer t;
  // accept either a bare word list or a full vocabulary with the reserved
  // block already in place (as stored in checkpoints)
  bool has_reserved =
      words.size() >= reserved.size() &&
      std::equal(reserved.begin(), reserved.end(), words.begin());
  if (!has_reserved) t.id_to_word_ = reserved;
  for (std::string& w : words) t.id_to_word_.push_back(std::move(w));
  for (size_t i = 0; i < t.id_to_word_.size(); ++i)
    t.word_to_id_[t.id_to_word_[i]] = int(i);
  return t;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const std::string& w : split(text)) {
    auto it = word_to_id_.find(w);
    // reserved surface forms never come from text
    int id = (it != word_to_id_.end() && it->second > kUnk) ? it->second : kUnk;
    ids.push_back(id);
  }
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || size_t(id) >= id_to_word_.size())
      throw IndexError("decode: id " + std::to_string(id) + " out of range");
    if (id == kPad || id == kBos || id == kEos || id == kSep) continue;
    const std::string& w = id_to_word_[size_t(id)];
    if (!out.empty() && !is_punct(w)) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace uvlm

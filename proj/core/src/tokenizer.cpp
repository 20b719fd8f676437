#include "nfp/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace nfp {

namespace {

const char* const kReserved[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

bool is_word_byte(unsigned char c) {
  if (c >= 0x80) return true;  // multi-byte UTF-8 sequences stay word chars
  return std::isalnum(c) != 0;
}

void add_token(Vocabulary& v, const std::string& token) {
  if (v.contains(token)) return;
  v.token_to_id.emplace(token, v.id_to_token.size());
  v.id_to_token.push_back(token);
}

}  // namespace

std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  const auto flush = [&] {
    if (!word.empty()) {
      tokens.push_back(std::move(word));
      word.clear();
    }
  };
  for (unsigned char c : text) {
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (is_word_byte(c)) {
      word += static_cast<char>(std::tolower(c));
    } else {
      // punctuation: always its own single-character token
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus,
                       std::size_t target_size) {
  if (corpus.empty()) {
    throw std::invalid_argument("build_vocab: corpus is empty");
  }
  if (target_size < 300) {
    throw std::invalid_argument("build_vocab: target_size must be >= 300");
  }

  std::unordered_map<std::string, std::uint64_t> word_freq;
  for (const std::string& text : corpus) {
    for (std::string& token : pretokenize(text)) {
      ++word_freq[std::move(token)];
    }
  }

  // Candidate pieces: whole words and "##"-prefixed proper suffixes, scored
  // by the total frequency of the words they occur in.
  std::unordered_map<std::string, std::uint64_t> piece_freq;
  std::map<char, bool> chars_seen;
  for (const auto& [word, freq] : word_freq) {
    for (char c : word) chars_seen[c] = true;
    if (word.size() >= 2) {
      piece_freq[word] += freq;
      // proper suffixes of length >= 2; single chars are fallbacks already
      for (std::size_t start = 1; start + 2 <= word.size(); ++start) {
        piece_freq["##" + word.substr(start)] += freq;
      }
    }
  }

  Vocabulary vocab;
  for (const char* r : kReserved) add_token(vocab, r);
  // chars_seen is an ordered map, so the fallback pieces come out sorted.
  for (const auto& [c, _] : chars_seen) add_token(vocab, std::string(1, c));
  for (const auto& [c, _] : chars_seen) add_token(vocab, "##" + std::string(1, c));

  std::vector<std::pair<std::string, std::uint64_t>> candidates(piece_freq.begin(),
                                                                piece_freq.end());
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [token, _] : candidates) {
    if (vocab.size() >= target_size) break;
    add_token(vocab, token);
  }
  return vocab;
}

std::vector<std::string> wordpiece_segment(std::string_view word,
                                           const Vocabulary& vocab) {
  std::vector<std::string> pieces;
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    std::string found;
    while (end > start) {
      std::string candidate(word.substr(start, end - start));
      if (start > 0) candidate = "##" + candidate;
      if (vocab.contains(candidate)) {
        found = std::move(candidate);
        break;
      }
      --end;
    }
    if (found.empty()) return {};  // no valid segmentation
    pieces.push_back(std::move(found));
    start = end;
  }
  return pieces;
}

TokenSequence encode(std::string_view text, const Vocabulary& vocab,
                     std::size_t max_len) {
  if (max_len < 2) {
    throw std::invalid_argument("encode: max_len must be >= 2");
  }

  std::vector<std::size_t> ids;
  ids.reserve(max_len);
  ids.push_back(Vocabulary::kCls);
  for (const std::string& word : pretokenize(text)) {
    const auto pieces = wordpiece_segment(word, vocab);
    if (pieces.empty()) {
      ids.push_back(Vocabulary::kUnk);
    } else {
      for (const auto& piece : pieces) {
        ids.push_back(vocab.token_to_id.find(piece)->second);
      }
    }
  }
  // Truncate keeping room for the final [SEP].
  if (ids.size() > max_len - 1) ids.resize(max_len - 1);
  ids.push_back(Vocabulary::kSep);

  TokenSequence seq;
  seq.true_length = ids.size();
  seq.ids = std::move(ids);
  seq.ids.resize(max_len, Vocabulary::kPad);
  seq.mask.assign(max_len, 0);
  for (std::size_t i = 0; i < seq.true_length; ++i) seq.mask[i] = 1;
  return seq;
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write vocab file: " + path.string());
  }
  for (const std::string& token : vocab.id_to_token) {
    out << token << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Vocabulary load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open vocab file: " + path.string());
  }
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (vocab.contains(line)) {
      throw std::runtime_error("vocab file has duplicate token '" + line + "': " +
                               path.string());
    }
    add_token(vocab, line);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (vocab.size() <= i || vocab.id_to_token[i] != kReserved[i]) {
      throw std::runtime_error("vocab file missing reserved token " +
                               std::string(kReserved[i]) + " at id " +
                               std::to_string(i) + ": " + path.string());
    }
  }
  return vocab;
}

}  // namespace nfp

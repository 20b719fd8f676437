#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace nfp {

// WordPiece-style vocabulary. Ids are dense 0..size()-1 with the four
// reserved tokens pinned to the front; continuation pieces carry the "##"
// prefix.
struct Vocabulary {
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kCls = 2;
  static constexpr std::size_t kSep = 3;

  std::vector<std::string> id_to_token;
  std::map<std::string, std::size_t, std::less<>> token_to_id;

  std::size_t size() const { return id_to_token.size(); }
  bool contains(std::string_view token) const {
    return token_to_id.find(token) != token_to_id.end();
  }
};

// Fixed-length id sequence with attention mask. mask[i] == 1 exactly for
// i < true_length; everything after is [PAD].
struct TokenSequence {
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> mask;
  std::size_t true_length = 0;
};

// Lowercases, splits on whitespace, and breaks out punctuation as
// single-character tokens. Bytes >= 0x80 are treated as word characters.
std::vector<std::string> pretokenize(std::string_view text);

// Builds a vocabulary from the corpus: reserved tokens, every single
// character seen (plain and "##"-prefixed, the segmentation fallback), then
// the most frequent whole words and "##"-suffix pieces until target_size is
// reached. Deterministic; frequency ties break lexicographically.
Vocabulary build_vocab(const std::vector<std::string>& corpus,
                       std::size_t target_size);

// Greedy longest-match WordPiece encoding of [CLS] + pieces + [SEP],
// truncated to max_len (the final [SEP] always survives), then padded.
// A word with no valid segmentation becomes a single [UNK].
TokenSequence encode(std::string_view text, const Vocabulary& vocab,
                     std::size_t max_len);

// Greedy longest-match segmentation of a single pre-tokenized word; empty
// result means the word has no valid segmentation.
std::vector<std::string> wordpiece_segment(std::string_view word,
                                           const Vocabulary& vocab);

// One token per line, line number = id.
void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocab(const std::filesystem::path& path);

}  // namespace nfp

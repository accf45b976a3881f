#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stageskip {

// Byte-level tokenizer: ids 0..255 are raw bytes, 256 is BOS, 257 is EOS.
// Fixed vocabulary, no training, fully reversible for byte ids.
class ByteTokenizer {
 public:
  static constexpr int kBos = 256;
  static constexpr int kEos = 257;
  static constexpr int kVocabSize = 258;

  static std::vector<int> encode(std::string_view text, bool add_bos = true) {
    std::vector<int> ids;
    ids.reserve(text.size() + 1);
    if (add_bos) ids.push_back(kBos);
    for (unsigned char c : text) ids.push_back(static_cast<int>(c));
    return ids;
  }

  // Non-byte ids (BOS/EOS or anything past them) decode to nothing.
  static std::string decode(std::span<const int> ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
      if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
    }
    return out;
  }
};

}  // namespace stageskip

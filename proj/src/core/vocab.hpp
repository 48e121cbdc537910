#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace prefopt::model {

// 20 canonical amino acids + UNK + BOS + PAD. Residue letters are the
// canonical one-letter codes plus 'X' for UNK; BOS/PAD never appear in a
// scored span.
class Vocabulary {
 public:
  static constexpr int64_t kCanonical = 20;
  static constexpr int64_t kUnk = 20;
  static constexpr int64_t kBos = 21;
  static constexpr int64_t kPad = 22;
  static constexpr int64_t kSize = 23;

  static const Vocabulary& instance();

  int64_t index_of(char letter) const;  // residues only; throws DataError
  char letter_of(int64_t index) const;
  bool is_residue(int64_t index) const {
    return index >= 0 && index <= kUnk;
  }
  static const std::string& residue_letters();  // "ACD...WYX"

 private:
  Vocabulary();
  std::array<int64_t, 256> to_index_;
  std::string letters_;
};

struct TokenizedSequence {
  std::vector<int64_t> tokens;  // residue tokens only, no BOS/PAD
  std::string structure_id;

  int64_t length() const { return static_cast<int64_t>(tokens.size()); }
};

TokenizedSequence tokenize(const std::string& sequence,
                           const std::string& structure_id = "");
std::string detokenize(const std::vector<int64_t>& tokens);

}  // namespace prefopt::model

#include "core/vocab.hpp"

namespace prefopt::model {

namespace {
constexpr const char* kResidueLetters = "ACDEFGHIKLMNPQRSTVWYX";
}

Vocabulary::Vocabulary() : letters_(kResidueLetters) {
  to_index_.fill(-1);
  for (size_t i = 0; i < letters_.size(); ++i)
    to_index_[static_cast<unsigned char>(letters_[i])] =
        static_cast<int64_t>(i);
}

const Vocabulary& Vocabulary::instance() {
  static const Vocabulary v;
  return v;
}

const std::string& Vocabulary::residue_letters() {
  static const std::string s(kResidueLetters);
  return s;
}

int64_t Vocabulary::index_of(char letter) const {
  const int64_t idx = to_index_[static_cast<unsigned char>(letter)];
  if (idx < 0)
    throw DataError(std::string("unknown residue letter '") + letter + "'");
  return idx;
}

char Vocabulary::letter_of(int64_t index) const {
  if (index >= 0 && index < static_cast<int64_t>(letters_.size()))
    return letters_[static_cast<size_t>(index)];
  if (index == kBos) return '^';
  if (index == kPad) return '_';
  throw DomainError("token index " + std::to_string(index) + " out of range");
}

TokenizedSequence tokenize(const std::string& sequence,
                           const std::string& structure_id) {
  if (sequence.empty()) throw DomainError("tokenize: empty sequence");
  const Vocabulary& v = Vocabulary::instance();
  TokenizedSequence out;
  out.structure_id = structure_id;
  out.tokens.reserve(sequence.size());
  for (char c : sequence) out.tokens.push_back(v.index_of(c));
  return out;
}

std::string detokenize(const std::vector<int64_t>& tokens) {
  const Vocabulary& v = Vocabulary::instance();
  std::string s;
  s.reserve(tokens.size());
  for (int64_t t : tokens) s.push_back(v.letter_of(t));
  return s;
}

}  // namespace prefopt::model

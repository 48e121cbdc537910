#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace prefopt::geom {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
  Vec3 normalized() const;
};

struct Residue {
  std::string chain_id;
  int64_t index = 0;
  Vec3 n, ca, c;
  char aa = 'X';
};

struct ChainSpan {
  std::string chain_id;
  size_t begin = 0;  // [begin, end) into residues
  size_t end = 0;
};

// Per-residue N/CA/C backbone coordinates, ordered (chain_id, residue_index).
struct BackboneStructure {
  std::string id;
  std::vector<Residue> residues;

  size_t size() const { return residues.size(); }
  std::string sequence() const;
  std::vector<ChainSpan> chain_spans() const;

  // Sorts into canonical order and checks invariants (strictly increasing
  // indices per chain, no coincident atoms within a residue).
  void canonicalize();
};

BackboneStructure structure_from_json(const std::string& json_text);
BackboneStructure load_structure(const std::string& path);
std::string structure_to_json(const BackboneStructure& s);
void save_structure(const BackboneStructure& s, const std::string& path);

// Signed torsion angle in radians, or nullopt when any spanning vector
// degenerates (exactly collinear triple).
std::optional<double> dihedral(const Vec3& a, const Vec3& b, const Vec3& c,
                               const Vec3& d);

// Sentinel distance used to pad the neighbor-distance block when fewer than k
// other residues exist.
inline constexpr double kNeighborPad = 999.0;
inline constexpr size_t kDihedralFeatures = 6;  // sin/cos of phi, psi, omega

struct ResidueFeatures {
  size_t count = 0;
  size_t width = 0;                         // kDihedralFeatures + k
  std::vector<double> matrix;               // row-major count x width
  std::vector<std::vector<int64_t>> neighbors;  // nearest-CA indices, ascending
};

// Geometric featurization: backbone dihedrals (sin/cos of phi, psi, omega;
// zeros where undefined at chain termini or degenerate triples) plus the
// distances to the k nearest other CA atoms in ascending order.
ResidueFeatures featurize(const BackboneStructure& s, int64_t k);

// Per-residue torsions for the internal-coordinate chain builder.
struct ResidueTorsions {
  double phi = 0, psi = 0, omega = 0;  // radians
};

// Builds a chain from ideal backbone bond geometry and the given torsions
// (natural-extension placement). torsions[i].phi places C_i, .psi places
// N_{i+1}, .omega places CA_i; the first residue's phi only orients the
// initial frame, and psi/omega past the last peptide bond are unused.
std::vector<Residue> build_chain(const std::string& chain_id,
                                 const std::string& aa_seq,
                                 const std::vector<ResidueTorsions>& torsions,
                                 const Vec3& offset = {});

}  // namespace prefopt::geom

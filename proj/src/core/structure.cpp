#include "core/structure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace prefopt::geom {

using nlohmann::json;

double Vec3::norm() const { return std::sqrt(dot(*this)); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n == 0.0) throw DomainError("normalize: zero vector");
  return {x / n, y / n, z / n};
}

std::string BackboneStructure::sequence() const {
  std::string s;
  s.reserve(residues.size());
  for (const Residue& r : residues) s.push_back(r.aa);
  return s;
}

std::vector<ChainSpan> BackboneStructure::chain_spans() const {
  std::vector<ChainSpan> spans;
  size_t i = 0;
  while (i < residues.size()) {
    size_t j = i;
    while (j < residues.size() && residues[j].chain_id == residues[i].chain_id)
      ++j;
    spans.push_back({residues[i].chain_id, i, j});
    i = j;
  }
  return spans;
}

void BackboneStructure::canonicalize() {
  std::stable_sort(residues.begin(), residues.end(),
                   [](const Residue& a, const Residue& b) {
                     if (a.chain_id != b.chain_id) return a.chain_id < b.chain_id;
                     return a.index < b.index;
                   });
  for (size_t i = 1; i < residues.size(); ++i) {
    if (residues[i].chain_id == residues[i - 1].chain_id &&
        residues[i].index <= residues[i - 1].index)
      throw DataError("structure '" + id + "': duplicate or non-increasing " +
                      "residue index " + std::to_string(residues[i].index) +
                      " in chain " + residues[i].chain_id);
  }
  auto same = [](const Vec3& a, const Vec3& b) {
    return a.x == b.x && a.y == b.y && a.z == b.z;
  };
  for (const Residue& r : residues) {
    if (same(r.n, r.ca) || same(r.ca, r.c) || same(r.n, r.c))
      throw DataError("structure '" + id + "': coincident backbone atoms at " +
                      r.chain_id + "/" + std::to_string(r.index));
  }
}

namespace {

Vec3 parse_xyz(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.size() != 3)
    throw DataError("structure: " + where + " must be a [x,y,z] array");
  Vec3 v{arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()};
  if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
    throw DataError("structure: non-finite coordinate in " + where);
  return v;
}

}  // namespace

BackboneStructure structure_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("structure: invalid JSON: ") + e.what());
  }
  BackboneStructure s;
  if (!doc.contains("id") || !doc["id"].is_string())
    throw DataError("structure: missing string field 'id'");
  s.id = doc["id"].get<std::string>();
  if (!doc.contains("chains") || !doc["chains"].is_array())
    throw DataError("structure '" + s.id + "': missing 'chains' array");
  for (const json& chain : doc["chains"]) {
    const std::string chain_id = chain.at("chain_id").get<std::string>();
    for (const json& res : chain.at("residues")) {
      Residue r;
      r.chain_id = chain_id;
      r.index = res.at("index").get<int64_t>();
      const std::string where = chain_id + "/" + std::to_string(r.index);
      r.n = parse_xyz(res.at("N"), where + "/N");
      r.ca = parse_xyz(res.at("CA"), where + "/CA");
      r.c = parse_xyz(res.at("C"), where + "/C");
      const std::string aa = res.at("aa").get<std::string>();
      if (aa.size() != 1)
        throw DataError("structure: 'aa' must be one letter at " + where);
      r.aa = aa[0];
      s.residues.push_back(std::move(r));
    }
  }
  s.canonicalize();
  return s;
}

BackboneStructure load_structure(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open structure file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return structure_from_json(buf.str());
}

std::string structure_to_json(const BackboneStructure& s) {
  json chains = json::array();
  for (const ChainSpan& span : s.chain_spans()) {
    json residues = json::array();
    for (size_t i = span.begin; i < span.end; ++i) {
      const Residue& r = s.residues[i];
      residues.push_back({{"index", r.index},
                          {"N", {r.n.x, r.n.y, r.n.z}},
                          {"CA", {r.ca.x, r.ca.y, r.ca.z}},
                          {"C", {r.c.x, r.c.y, r.c.z}},
                          {"aa", std::string(1, r.aa)}});
    }
    chains.push_back({{"chain_id", span.chain_id}, {"residues", residues}});
  }
  return json{{"id", s.id}, {"chains", chains}}.dump(2);
}

void save_structure(const BackboneStructure& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write structure file: " + path);
  out << structure_to_json(s) << "\n";
}

std::optional<double> dihedral(const Vec3& a, const Vec3& b, const Vec3& c,
                               const Vec3& d) {
  const Vec3 b1 = b - a, b2 = c - b, b3 = d - c;
  const Vec3 n1 = b1.cross(b2);
  const Vec3 n2 = b2.cross(b3);
  constexpr double kDegenerate = 1e-18;  // squared norm, ~1e-9 on each axis
  if (n1.dot(n1) < kDegenerate || n2.dot(n2) < kDegenerate ||
      b2.dot(b2) < kDegenerate)
    return std::nullopt;
  const double x = n1.dot(n2);
  const double y = n1.cross(b2.normalized()).dot(n2);
  return std::atan2(y, x);
}

ResidueFeatures featurize(const BackboneStructure& s, int64_t k) {
  if (s.size() < 2)
    throw DomainError("featurize: structure '" + s.id +
                      "' needs at least 2 residues");
  if (k < 1) throw DomainError("featurize: k must be >= 1");

  const size_t n = s.size();
  ResidueFeatures out;
  out.count = n;
  out.width = kDihedralFeatures + static_cast<size_t>(k);
  out.matrix.assign(n * out.width, 0.0);
  out.neighbors.resize(n);

  // dihedrals, per chain, adjacency = consecutive residues in the chain
  for (const ChainSpan& span : s.chain_spans()) {
    for (size_t i = span.begin; i < span.end; ++i) {
      const Residue& r = s.residues[i];
      double* row = out.matrix.data() + i * out.width;
      if (i > span.begin) {
        const Residue& prev = s.residues[i - 1];
        if (auto phi = dihedral(prev.c, r.n, r.ca, r.c)) {
          row[0] = std::sin(*phi);
          row[1] = std::cos(*phi);
        }
        if (auto omega = dihedral(prev.ca, prev.c, r.n, r.ca)) {
          row[4] = std::sin(*omega);
          row[5] = std::cos(*omega);
        }
      }
      if (i + 1 < span.end) {
        const Residue& next = s.residues[i + 1];
        if (auto psi = dihedral(r.n, r.ca, r.c, next.n)) {
          row[2] = std::sin(*psi);
          row[3] = std::cos(*psi);
        }
      }
    }
  }

  // k nearest CA distances, ascending; ties broken by residue position
  for (size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, size_t>> dists;
    dists.reserve(n - 1);
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dists.emplace_back((s.residues[i].ca - s.residues[j].ca).norm(), j);
    }
    std::sort(dists.begin(), dists.end());
    double* row = out.matrix.data() + i * out.width + kDihedralFeatures;
    const size_t have = std::min(static_cast<size_t>(k), dists.size());
    for (size_t t = 0; t < static_cast<size_t>(k); ++t)
      row[t] = t < have ? dists[t].first : kNeighborPad;
    for (size_t t = 0; t < have; ++t)
      out.neighbors[i].push_back(static_cast<int64_t>(dists[t].second));
  }
  return out;
}

namespace {

// Ideal backbone internal coordinates (angstroms, degrees).
constexpr double kBondNCa = 1.458;
constexpr double kBondCaC = 1.525;
constexpr double kBondCN = 1.329;
constexpr double kAngleNCaC = 111.2 * M_PI / 180.0;
constexpr double kAngleCaCN = 116.2 * M_PI / 180.0;
constexpr double kAngleCNCa = 121.7 * M_PI / 180.0;

// Natural-extension placement of the next atom from the previous three.
Vec3 place_atom(const Vec3& a, const Vec3& b, const Vec3& c, double bond,
                double angle, double torsion) {
  const Vec3 bc = (c - b).normalized();
  const Vec3 nrm = (b - a).cross(bc).normalized();
  const Vec3 m = nrm.cross(bc);
  const double d1 = -bond * std::cos(angle);
  const double d2 = bond * std::sin(angle) * std::cos(torsion);
  const double d3 = -bond * std::sin(angle) * std::sin(torsion);
  return c + bc * d1 + m * d2 + nrm * d3;
}

}  // namespace

std::vector<Residue> build_chain(const std::string& chain_id,
                                 const std::string& aa_seq,
                                 const std::vector<ResidueTorsions>& torsions,
                                 const Vec3& offset) {
  if (aa_seq.size() != torsions.size())
    throw DomainError("build_chain: sequence and torsion lengths differ");
  if (aa_seq.empty()) throw DomainError("build_chain: empty chain");

  std::vector<Residue> out(aa_seq.size());
  for (size_t i = 0; i < aa_seq.size(); ++i) {
    out[i].chain_id = chain_id;
    out[i].index = static_cast<int64_t>(i + 1);
    out[i].aa = aa_seq[i];
  }

  // First residue in a fixed local frame.
  out[0].n = {0, 0, 0};
  out[0].ca = {kBondNCa, 0, 0};
  out[0].c = place_atom({0, -1, 0}, out[0].n, out[0].ca, kBondCaC, kAngleNCaC,
                        torsions[0].phi);
  for (size_t i = 1; i < out.size(); ++i) {
    out[i].n = place_atom(out[i - 1].n, out[i - 1].ca, out[i - 1].c, kBondCN,
                          kAngleCaCN, torsions[i - 1].psi);
    out[i].ca = place_atom(out[i - 1].ca, out[i - 1].c, out[i].n, kBondNCa,
                           kAngleCNCa, torsions[i].omega);
    out[i].c = place_atom(out[i - 1].c, out[i].n, out[i].ca, kBondCaC,
                          kAngleNCaC, torsions[i].phi);
  }
  for (Residue& r : out) {
    r.n = r.n + offset;
    r.ca = r.ca + offset;
    r.c = r.c + offset;
  }
  return out;
}

}  // namespace prefopt::geom

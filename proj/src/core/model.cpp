#include "core/model.hpp"

#include <algorithm>
#include <cmath>

namespace prefopt::model {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

int64_t ModelConfig::head_dim() const {
  validate();
  return d / heads;
}

void ModelConfig::validate() const {
  if (d < 1 || heads < 1 || k_neighbors < 1)
    throw ConfigError("model config: d, heads and k_neighbors must be >= 1");
  if (d % heads != 0)
    throw ConfigError("model config: d (" + std::to_string(d) +
                      ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  if (vocab_size != Vocabulary::kSize)
    throw ConfigError("model config: vocab_size must be " +
                      std::to_string(Vocabulary::kSize));
}

ScoreSpan score_span_from_string(const std::string& s) {
  if (s == "full") return ScoreSpan::kFull;
  if (s == "antibody_only") return ScoreSpan::kAntibodyOnly;
  throw ConfigError("score_span must be 'full' or 'antibody_only', got '" + s +
                    "'");
}

std::string score_span_to_string(ScoreSpan span) {
  return span == ScoreSpan::kFull ? "full" : "antibody_only";
}

Model::Model(ModelConfig cfg, uint64_t seed) : Model(cfg, seed, false) {}

Model Model::zero_initialized(ModelConfig cfg) { return Model(cfg, 0, true); }

Model::Model(ModelConfig cfg, uint64_t seed, bool zero)
    : config_(cfg), init_seed_(seed) {
  config_.validate();
  const int64_t d = cfg.d;
  const int64_t dh = cfg.head_dim();
  const int64_t fw = cfg.feature_width();
  Rng root(seed);
  Rng* rng = zero ? nullptr : &root;

  const double fs = 1.0 / std::sqrt(static_cast<double>(fw));
  const double ds = 1.0 / std::sqrt(static_cast<double>(d));
  const double cs = 1.0 / std::sqrt(static_cast<double>(2 * d));
  const double ms = 1.0 / std::sqrt(static_cast<double>(3 * d));

  add_param("enc.proj.w", ParamGroup::kEncoder, {fw, d}, fs, rng);
  add_param("enc.proj.b", ParamGroup::kEncoder, {d}, 0.0, rng);
  add_param("enc.mix.w", ParamGroup::kEncoder, {2 * d, d}, cs, rng);
  add_param("enc.mix.b", ParamGroup::kEncoder, {d}, 0.0, rng);

  add_param("dec.tok.embed", ParamGroup::kDecoder, {cfg.vocab_size, d}, 0.2,
            rng);
  for (int64_t h = 0; h < cfg.heads; ++h) {
    const std::string p = "dec.attn.h" + std::to_string(h) + ".";
    add_param(p + "wq", ParamGroup::kDecoder, {2 * d, dh}, cs, rng);
    add_param(p + "wk", ParamGroup::kDecoder, {2 * d, dh}, cs, rng);
    add_param(p + "wv", ParamGroup::kDecoder, {2 * d, dh}, cs, rng);
  }
  add_param("dec.attn.out.w", ParamGroup::kDecoder, {3 * d, d}, ms, rng);
  add_param("dec.attn.out.b", ParamGroup::kDecoder, {d}, 0.0, rng);
  add_param("dec.head.w", ParamGroup::kDecoder, {d, cfg.vocab_size}, ds, rng);
  add_param("dec.head.b", ParamGroup::kDecoder, {cfg.vocab_size}, 0.0, rng);
}

void Model::add_param(const std::string& name, ParamGroup group, Shape shape,
                      double init_sd, Rng* rng) {
  if (by_name_.count(name))
    throw UsageError("duplicate parameter name " + name);
  Tensor t;
  if (rng == nullptr || init_sd == 0.0) {
    t = Tensor::zeros(shape);
  } else {
    Rng stream = rng->fork(name);
    std::vector<double> vals(static_cast<size_t>(ad::shape_numel(shape)));
    for (double& v : vals) v = stream.gaussian(0.0, init_sd);
    t = Tensor::from_values(shape, std::move(vals));
  }
  by_name_[name] = params_.size();
  params_.push_back(Param{name, group, std::move(t)});
}

Tensor Model::param(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw UsageError("no such parameter: " + name);
  return params_[it->second].tensor;
}

bool Model::has_param(const std::string& name) const {
  return by_name_.count(name) > 0;
}

int64_t Model::total_param_count() const {
  int64_t n = 0;
  for (const Param& p : params_) n += p.tensor.size();
  return n;
}

int64_t Model::group_param_count(ParamGroup g) const {
  int64_t n = 0;
  for (const Param& p : params_)
    if (p.group == g) n += p.tensor.size();
  return n;
}

bool Model::encoder_requires_grad() const {
  for (const Param& p : params_)
    if (p.group == ParamGroup::kEncoder && p.tensor.requires_grad())
      return true;
  return false;
}

Tensor Model::encode(Tape& tape, const geom::ResidueFeatures& feat) const {
  const int64_t n = static_cast<int64_t>(feat.count);
  const int64_t w = static_cast<int64_t>(feat.width);
  if (w != config_.feature_width())
    throw DimensionError("encode: feature width " + std::to_string(w) +
                         " does not match encoder input width " +
                         std::to_string(config_.feature_width()));

  // Distance columns arrive in angstroms; prescale them to the same order as
  // the unit-range dihedral block. Equivalent to a column rescaling of
  // enc.proj.w, kept explicit so the default init is well conditioned.
  constexpr double kDistanceScale = 0.1;
  std::vector<double> scaled = feat.matrix;
  for (int64_t i = 0; i < n; ++i)
    for (size_t j = geom::kDihedralFeatures; j < feat.width; ++j)
      scaled[static_cast<size_t>(i) * feat.width + j] *= kDistanceScale;
  Tensor f = Tensor::from_values({n, w}, std::move(scaled));
  Tensor proj =
      tape.add_rowvec(tape.matmul(f, param("enc.proj.w")), param("enc.proj.b"));

  // Row-stochastic neighbor averaging; k-NN sets are order independent.
  Tensor mix_weights = Tensor::zeros({n, n});
  for (int64_t i = 0; i < n; ++i) {
    const auto& nb = feat.neighbors[static_cast<size_t>(i)];
    if (nb.empty())
      throw DomainError("encode: residue with no neighbors");
    const double wgt = 1.0 / static_cast<double>(nb.size());
    for (int64_t j : nb)
      mix_weights.values()[static_cast<size_t>(i * n + j)] = wgt;
  }
  Tensor neighbor_mean = tape.matmul(mix_weights, proj);
  Tensor mixed = tape.concat_cols({proj, neighbor_mean});
  return tape.tanh(
      tape.add_rowvec(tape.matmul(mixed, param("enc.mix.w")), param("enc.mix.b")));
}

Tensor Model::decode_logprobs(Tape& tape, const Tensor& embeddings,
                              const std::vector<int64_t>& tokens) const {
  const int64_t n = static_cast<int64_t>(tokens.size());
  if (n == 0) throw DomainError("decode: empty sequence");
  if (embeddings.shape().size() != 2 || embeddings.shape()[0] != n ||
      embeddings.shape()[1] != config_.d)
    throw DimensionError(
        "decode: embeddings " + ad::shape_str(embeddings.shape()) +
        " do not align with " + std::to_string(n) + " tokens (d=" +
        std::to_string(config_.d) + ")");
  const Vocabulary& vocab = Vocabulary::instance();
  for (int64_t t : tokens) {
    if (t == Vocabulary::kPad)
      throw DataError("decode: PAD token inside scored span");
    if (!vocab.is_residue(t))
      throw DataError("decode: non-residue token " + std::to_string(t) +
                      " in scored span");
  }

  // Position i sees the embedding of y_{i-1} (BOS at i = 0).
  std::vector<int64_t> shifted(tokens.size());
  shifted[0] = Vocabulary::kBos;
  std::copy(tokens.begin(), tokens.end() - 1, shifted.begin() + 1);

  Tensor tok = tape.gather_rows(param("dec.tok.embed"), shifted);
  Tensor x = tape.concat_cols({tok, embeddings});

  const double inv_sqrt_dh =
      1.0 / std::sqrt(static_cast<double>(config_.head_dim()));
  std::vector<Tensor> head_ctx;
  head_ctx.reserve(static_cast<size_t>(config_.heads));
  for (int64_t h = 0; h < config_.heads; ++h) {
    const std::string p = "dec.attn.h" + std::to_string(h) + ".";
    Tensor q = tape.matmul(x, param(p + "wq"));
    Tensor k = tape.matmul(x, param(p + "wk"));
    Tensor v = tape.matmul(x, param(p + "wv"));
    Tensor scores = tape.causal_mask(tape.scale(tape.matmul_nt(q, k), inv_sqrt_dh));
    head_ctx.push_back(tape.matmul(tape.softmax(scores), v));
  }
  head_ctx.push_back(x);  // direct path into the block's output projection
  Tensor hidden = tape.add_rowvec(
      tape.matmul(tape.concat_cols(head_ctx), param("dec.attn.out.w")),
      param("dec.attn.out.b"));
  Tensor logits = tape.add_rowvec(tape.matmul(hidden, param("dec.head.w")),
                                  param("dec.head.b"));
  return tape.log_softmax(logits);
}

Tensor Model::embeddings_for(Tape& tape, const geom::BackboneStructure& s,
                             StructureCache* cache) const {
  const bool cacheable = cache != nullptr && !encoder_requires_grad();
  if (cacheable) {
    auto it = cache->embeddings.find(s.id);
    if (it != cache->embeddings.end()) return it->second;
  }
  const geom::ResidueFeatures* feat = nullptr;
  geom::ResidueFeatures local;
  if (cache != nullptr) {
    auto it = cache->features.find(s.id);
    if (it == cache->features.end())
      it = cache->features.emplace(s.id, geom::featurize(s, config_.k_neighbors))
               .first;
    feat = &it->second;
  } else {
    local = geom::featurize(s, config_.k_neighbors);
    feat = &local;
  }
  if (cacheable) {
    Tape private_tape(/*recording=*/false);
    Tensor e = encode(private_tape, *feat);
    e.set_requires_grad(false);
    cache->embeddings.emplace(s.id, e);
    return e;
  }
  return encode(tape, *feat);
}

LogLik Model::sequence_loglik(Tape& tape, const geom::BackboneStructure& s,
                              const std::string& sequence, ScoreSpan span,
                              StructureCache* cache) const {
  const TokenizedSequence toks = tokenize(sequence, s.id);
  if (static_cast<size_t>(toks.length()) != s.size())
    throw DimensionError("sequence_loglik: sequence length " +
                         std::to_string(toks.length()) +
                         " does not match structure '" + s.id + "' with " +
                         std::to_string(s.size()) + " residues");

  Tensor e = embeddings_for(tape, s, cache);
  Tensor rows = decode_logprobs(tape, e, toks.tokens);
  Tensor picked = tape.gather_per_row(rows, toks.tokens);

  int64_t begin = 0, end = toks.length();
  if (span == ScoreSpan::kAntibodyOnly) {
    bool found = false;
    for (const geom::ChainSpan& cs : s.chain_spans()) {
      if (cs.chain_id == "H") {
        begin = static_cast<int64_t>(cs.begin);
        end = static_cast<int64_t>(cs.end);
        found = true;
        break;
      }
    }
    if (!found)
      throw DataError("score_span=antibody_only: structure '" + s.id +
                      "' has no chain 'H'");
    picked = tape.slice_elems(picked, begin, end);
  }

  LogLik out;
  out.sum_ll = tape.sum(picked);
  out.mean_ll =
      tape.scale(out.sum_ll, 1.0 / static_cast<double>(end - begin));
  return out;
}

Tensor teacher_forced_rows(const Model& m, const geom::BackboneStructure& s,
                           const std::string& wildtype, StructureCache* cache) {
  const TokenizedSequence toks = tokenize(wildtype, s.id);
  if (static_cast<size_t>(toks.length()) != s.size())
    throw DimensionError("teacher_forced_rows: wild type length " +
                         std::to_string(toks.length()) +
                         " does not match structure '" + s.id + "'");
  Tape tape(/*recording=*/false);
  Tensor e = m.embeddings_for(tape, s, cache);
  return m.decode_logprobs(tape, e, toks.tokens);
}

namespace {

struct PoolEntry {
  int64_t position;
  std::vector<int64_t> improving;       // residue tokens, log-prob descending
  std::vector<double> improving_logp;
  double best_gain = 0.0;
};

std::vector<PoolEntry> pool_entries(const Model& m,
                                    const geom::BackboneStructure& s,
                                    const std::string& wildtype,
                                    const std::vector<int64_t>& region_mask,
                                    StructureCache* cache) {
  const TokenizedSequence toks = tokenize(wildtype, s.id);
  const int64_t n = toks.length();
  for (int64_t p : region_mask)
    if (p < 0 || p >= n)
      throw DomainError("region mask position " + std::to_string(p) +
                        " outside sequence of length " + std::to_string(n));

  std::vector<int64_t> sorted_mask = region_mask;
  std::sort(sorted_mask.begin(), sorted_mask.end());
  sorted_mask.erase(std::unique(sorted_mask.begin(), sorted_mask.end()),
                    sorted_mask.end());
  if (sorted_mask.empty()) return {};

  const Tensor rows = teacher_forced_rows(m, s, wildtype, cache);
  std::vector<PoolEntry> entries;
  for (int64_t p : sorted_mask) {
    const int64_t wt_tok = toks.tokens[static_cast<size_t>(p)];
    const double wt_logp = rows.at(p, wt_tok);
    PoolEntry entry;
    entry.position = p;
    std::vector<std::pair<double, int64_t>> improving;
    for (int64_t t = 0; t <= Vocabulary::kUnk; ++t) {
      if (t == wt_tok) continue;
      const double lp = rows.at(p, t);
      if (lp > wt_logp) improving.emplace_back(lp, t);
    }
    if (improving.empty()) continue;
    std::sort(improving.begin(), improving.end(),
              [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
              });
    for (const auto& [lp, t] : improving) {
      entry.improving.push_back(t);
      entry.improving_logp.push_back(lp);
    }
    entry.best_gain = improving[0].first - wt_logp;
    entries.push_back(std::move(entry));
  }
  return entries;
}

// Count of distinct reachable variants: sum over s of the elementary
// symmetric polynomial e_s of the per-position improving-token counts.
// Saturates at kCountCap.
constexpr double kCountCap = 1e15;

double reachable_count(const std::vector<PoolEntry>& entries,
                       int64_t max_subs) {
  const size_t cap = std::min<size_t>(static_cast<size_t>(max_subs),
                                      entries.size());
  std::vector<double> e(cap + 1, 0.0);
  e[0] = 1.0;
  for (const PoolEntry& entry : entries) {
    const double c = static_cast<double>(entry.improving.size());
    for (size_t s = cap; s >= 1; --s) {
      e[s] = std::min(kCountCap, e[s] + e[s - 1] * c);
      if (s == 1) break;
    }
  }
  double total = 0.0;
  for (size_t s = 1; s <= cap; ++s) total = std::min(kCountCap, total + e[s]);
  return total;
}

void enumerate_all(const std::vector<PoolEntry>& entries, int64_t max_subs,
                   const std::string& wildtype, size_t start,
                   std::vector<std::pair<int64_t, int64_t>>& chosen,
                   std::vector<GeneratedVariant>& out) {
  if (!chosen.empty()) {
    GeneratedVariant v;
    v.sequence = wildtype;
    for (const auto& [pos, tok] : chosen) {
      v.sequence[static_cast<size_t>(pos)] =
          Vocabulary::instance().letter_of(tok);
      v.positions.push_back(pos);
    }
    out.push_back(std::move(v));
  }
  if (static_cast<int64_t>(chosen.size()) == max_subs) return;
  for (size_t i = start; i < entries.size(); ++i) {
    for (int64_t tok : entries[i].improving) {
      chosen.emplace_back(entries[i].position, tok);
      enumerate_all(entries, max_subs, wildtype, i + 1, chosen, out);
      chosen.pop_back();
    }
  }
}

}  // namespace

std::vector<int64_t> mutable_pool(const Model& m,
                                  const geom::BackboneStructure& s,
                                  const std::string& wildtype,
                                  const std::vector<int64_t>& region_mask,
                                  StructureCache* cache) {
  std::vector<int64_t> pool;
  for (const PoolEntry& e : pool_entries(m, s, wildtype, region_mask, cache))
    pool.push_back(e.position);
  return pool;
}

GenerateResult generate_variants(const Model& m,
                                 const geom::BackboneStructure& s,
                                 const std::string& wildtype,
                                 const std::vector<int64_t>& region_mask,
                                 const GenerateConfig& cfg,
                                 StructureCache* cache) {
  if (cfg.max_subs < 1) throw ConfigError("generate: max_subs must be >= 1");
  if (cfg.count < 1) throw ConfigError("generate: count must be >= 1");
  if (!(cfg.temperature > 0.0))
    throw ConfigError("generate: temperature must be > 0");

  const std::vector<PoolEntry> entries =
      pool_entries(m, s, wildtype, region_mask, cache);
  if (entries.empty()) throw DomainError("generate: no admissible positions");

  GenerateResult result;
  const double total = reachable_count(entries, cfg.max_subs);
  if (total <= static_cast<double>(cfg.count)) {
    std::vector<std::pair<int64_t, int64_t>> chosen;
    enumerate_all(entries, cfg.max_subs, wildtype, 0, chosen, result.variants);
    result.exhausted =
        static_cast<int64_t>(result.variants.size()) < cfg.count;
    return result;
  }

  Rng rng(cfg.seed);
  std::set<std::string> seen;
  const int64_t attempt_cap = cfg.count * 50 + 1000;
  int64_t attempts = 0;
  while (static_cast<int64_t>(result.variants.size()) < cfg.count &&
         attempts < attempt_cap) {
    ++attempts;
    int64_t subs = 1 + rng.uniform_int(cfg.max_subs);
    subs = std::min<int64_t>(subs, static_cast<int64_t>(entries.size()));

    // positions without replacement, weighted by best log-likelihood gain
    std::vector<size_t> avail(entries.size());
    for (size_t i = 0; i < avail.size(); ++i) avail[i] = i;
    std::vector<size_t> picked;
    for (int64_t t = 0; t < subs; ++t) {
      std::vector<double> w;
      w.reserve(avail.size());
      for (size_t i : avail) w.push_back(entries[i].best_gain);
      const size_t sel = rng.weighted_index(w);
      picked.push_back(avail[sel]);
      avail.erase(avail.begin() + static_cast<long>(sel));
    }
    std::sort(picked.begin(), picked.end());

    GeneratedVariant v;
    v.sequence = wildtype;
    for (size_t i : picked) {
      const PoolEntry& entry = entries[i];
      const double mx = entry.improving_logp[0];
      std::vector<double> w(entry.improving.size());
      for (size_t t = 0; t < w.size(); ++t)
        w[t] = std::exp((entry.improving_logp[t] - mx) / cfg.temperature);
      const int64_t tok = entry.improving[rng.weighted_index(w)];
      v.sequence[static_cast<size_t>(entry.position)] =
          Vocabulary::instance().letter_of(tok);
      v.positions.push_back(entry.position);
    }
    if (seen.insert(v.sequence).second) result.variants.push_back(std::move(v));
  }
  result.exhausted = static_cast<int64_t>(result.variants.size()) < cfg.count;
  return result;
}

}  // namespace prefopt::model

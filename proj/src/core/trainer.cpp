#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

#include "core/evalkit.hpp"
#include "core/ioutil.hpp"

namespace prefopt::trainer {

using model::Model;

Objective objective_from_string(const std::string& s) {
  if (s == "nll") return Objective::kNll;
  if (s == "dpo") return Objective::kDpo;
  if (s == "simpo") return Objective::kSimpo;
  throw ConfigError("objective must be nll|dpo|simpo, got '" + s + "'");
}

std::string objective_to_string(Objective o) {
  switch (o) {
    case Objective::kNll: return "nll";
    case Objective::kDpo: return "dpo";
    case Objective::kSimpo: return "simpo";
  }
  throw UsageError("bad objective enum");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (delta_min < 0.0) throw ConfigError("train: delta_min must be >= 0");
  if (!(pair_gap_max > 0.0)) throw ConfigError("train: pair_gap_max must be > 0");
  if (max_pairs < 1) throw ConfigError("train: max_pairs must be >= 1");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
  hp.validate();
  optimizer.validate();
}

uint64_t TrainConfig::fingerprint() const {
  std::ostringstream os;
  os << objective_to_string(objective) << '|' << epochs << '|' << batch_size
     << '|' << io::format_double(hp.beta) << '|' << io::format_double(hp.gamma)
     << '|' << io::format_double(delta_min) << '|'
     << io::format_double(pair_gap_max) << '|' << max_pairs << '|'
     << max_val_pairs << '|' << seed << '|' << io::format_double(optimizer.lr)
     << '|' << io::format_double(optimizer.beta1) << '|'
     << io::format_double(optimizer.beta2) << '|'
     << io::format_double(optimizer.eps) << '|'
     << io::format_double(optimizer.weight_decay) << '|'
     << io::format_double(clip_norm) << '|' << model::score_span_to_string(span)
     << '|' << eval_every;
  const std::string s = os.str();
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// --- pair sampling ---------------------------------------------------------

namespace {

struct AssayPairSpace {
  const data::AssayGroup* group = nullptr;
  std::vector<double> scores;        // sorted ascending
  std::vector<size_t> record_index;  // parallel to scores
  std::vector<int64_t> lo;           // loser window per winner
  std::vector<int64_t> hi;
  std::vector<uint64_t> winner_prefix;  // prefix sums of window sizes
  uint64_t total = 0;
};

}  // namespace

std::vector<pref::PreferencePair> sample_pairs(
    const data::Dataset& dataset, const std::vector<size_t>& subset,
    double delta_min, double gap_max, int64_t max_pairs, uint64_t seed) {
  if (delta_min < 0.0) throw ConfigError("sample_pairs: delta_min must be >= 0");
  if (max_pairs < 1) throw ConfigError("sample_pairs: max_pairs must be >= 1");

  std::vector<char> in_subset(dataset.size(), 0);
  for (size_t i : subset) {
    if (i >= dataset.size()) throw UsageError("sample_pairs: bad subset index");
    in_subset[i] = 1;
  }

  std::vector<AssayPairSpace> spaces;
  uint64_t grand_total = 0;
  for (const data::AssayGroup& g : dataset.assays) {
    AssayPairSpace space;
    space.group = &g;
    std::vector<std::pair<double, size_t>> items;
    for (size_t i : g.rows)
      if (in_subset[i]) items.emplace_back(dataset.records[i].binding_score, i);
    if (items.size() < 2) continue;
    std::sort(items.begin(), items.end());
    for (auto& [score, idx] : items) {
      space.scores.push_back(score);
      space.record_index.push_back(idx);
    }
    for (size_t i = 1; i < items.size(); ++i)
      if (dataset.records[items[i].second].structure_id !=
          dataset.records[items[0].second].structure_id)
        throw DataError("assay " + g.assay_id +
                        ": rows disagree on structure_id");

    const auto& s = space.scores;
    space.winner_prefix.push_back(0);
    for (size_t i = 0; i < s.size(); ++i) {
      int64_t lo = 0;
      if (std::isfinite(gap_max))
        lo = std::lower_bound(s.begin(), s.end(), s[i] - gap_max) - s.begin();
      int64_t hi;
      if (delta_min > 0.0)
        hi = std::upper_bound(s.begin(), s.end(), s[i] - delta_min) - s.begin();
      else
        hi = std::lower_bound(s.begin(), s.end(), s[i]) - s.begin();
      if (hi < lo) hi = lo;
      space.lo.push_back(lo);
      space.hi.push_back(hi);
      space.total += static_cast<uint64_t>(hi - lo);
      space.winner_prefix.push_back(space.total);
    }
    grand_total += space.total;
    spaces.push_back(std::move(space));
  }

  if (grand_total == 0) {
    std::string msg = "sample_pairs: no admissible pair in any assay:";
    for (const data::AssayGroup& g : dataset.assays)
      msg += " " + g.assay_id + "=0";
    throw DomainError(msg);
  }

  // choose global pair ranks
  std::vector<uint64_t> ranks;
  if (grand_total <= static_cast<uint64_t>(max_pairs)) {
    ranks.resize(grand_total);
    for (uint64_t i = 0; i < grand_total; ++i) ranks[i] = i;
  } else {
    // Floyd's sampling without replacement
    Rng rng(seed);
    std::set<uint64_t> chosen;
    const uint64_t k = static_cast<uint64_t>(max_pairs);
    for (uint64_t j = grand_total - k; j < grand_total; ++j) {
      const uint64_t t = static_cast<uint64_t>(
          rng.uniform_int(static_cast<int64_t>(j) + 1));
      if (!chosen.insert(t).second) chosen.insert(j);
    }
    ranks.assign(chosen.begin(), chosen.end());
  }

  std::vector<pref::PreferencePair> pairs;
  pairs.reserve(ranks.size());
  size_t space_idx = 0;
  uint64_t space_base = 0;
  for (uint64_t r : ranks) {
    while (r >= space_base + spaces[space_idx].total) {
      space_base += spaces[space_idx].total;
      ++space_idx;
    }
    const AssayPairSpace& space = spaces[space_idx];
    const uint64_t local = r - space_base;
    const auto it = std::upper_bound(space.winner_prefix.begin(),
                                     space.winner_prefix.end(), local);
    const size_t w = static_cast<size_t>(it - space.winner_prefix.begin()) - 1;
    const uint64_t offset = local - space.winner_prefix[w];
    const size_t l = static_cast<size_t>(space.lo[w] + static_cast<int64_t>(offset));

    pref::PreferencePair pair;
    pair.winner = space.record_index[w];
    pair.loser = space.record_index[l];
    pair.assay_id = space.group->assay_id;
    pair.structure_id = dataset.records[pair.winner].structure_id;
    pair.score_gap = dataset.records[pair.winner].binding_score -
                     dataset.records[pair.loser].binding_score;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream out;
  out << "epoch,split,loss,ranking_acc,spearman_mean\n";
  auto cell = [](double v) {
    return std::isnan(v) ? std::string() : io::format_double(v);
  };
  for (const EpochMetrics& m : metrics)
    out << io::join_csv({std::to_string(m.epoch), m.split, cell(m.loss),
                         cell(m.ranking_acc), cell(m.spearman_mean)})
        << "\n";
  return out.str();
}

// --- checkpoint container ---------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'R', 'E', 'F', 'O', 'P', 'T', 'C'};
constexpr uint32_t kFormatVersion = 1;

void put_u32(std::string* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string* out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string* out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}
void put_str(std::string* out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out->append(s);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw IoError("checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

nlohmann::json meta_to_json(const CheckpointMeta& meta) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["dims"] = {{"d", meta.dims.d},
               {"heads", meta.dims.heads},
               {"k_neighbors", meta.dims.k_neighbors},
               {"vocab_size", meta.dims.vocab_size}};
  j["frozen"] = meta.frozen_names;
  j["objective"] = meta.objective;
  j["seed"] = meta.seed;
  j["config_fingerprint"] = meta.config_fingerprint;
  j["epochs_completed"] = meta.epochs_completed;
  j["best_epoch"] = meta.best_epoch;
  j["best_metric"] = std::isnan(meta.best_metric)
                         ? nlohmann::json(nullptr)
                         : nlohmann::json(meta.best_metric);
  j["has_optimizer_state"] = meta.has_optimizer_state;
  j["has_reference"] = meta.has_reference;
  return j;
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta meta;
  meta.dims.d = j.at("dims").at("d").get<int64_t>();
  meta.dims.heads = j.at("dims").at("heads").get<int64_t>();
  meta.dims.k_neighbors = j.at("dims").at("k_neighbors").get<int64_t>();
  meta.dims.vocab_size = j.at("dims").at("vocab_size").get<int64_t>();
  meta.frozen_names = j.at("frozen").get<std::vector<std::string>>();
  meta.objective = j.at("objective").get<std::string>();
  meta.seed = j.at("seed").get<uint64_t>();
  meta.config_fingerprint = j.at("config_fingerprint").get<uint64_t>();
  meta.epochs_completed = j.at("epochs_completed").get<int64_t>();
  meta.best_epoch = j.at("best_epoch").get<int64_t>();
  meta.best_metric = j.at("best_metric").is_null()
                         ? std::numeric_limits<double>::quiet_NaN()
                         : j.at("best_metric").get<double>();
  meta.has_optimizer_state = j.at("has_optimizer_state").get<bool>();
  meta.has_reference = j.at("has_reference").get<bool>();
  return meta;
}

void put_tensor_section(std::string* out, const Model& m) {
  put_u32(out, static_cast<uint32_t>(m.params().size()));
  for (const model::Param& p : m.params()) {
    put_str(out, p.name);
    put_u32(out, static_cast<uint32_t>(p.tensor.shape().size()));
    for (int64_t d : p.tensor.shape()) put_u64(out, static_cast<uint64_t>(d));
    for (double v : p.tensor.values()) put_f64(out, v);
  }
}

}  // namespace

void checkpoint_save(const std::string& path, const Model& m,
                     const CheckpointMeta& meta_in, const AdamW* optimizer,
                     const Model* reference) {
  CheckpointMeta meta = meta_in;
  meta.dims = m.config();
  meta.has_optimizer_state = optimizer != nullptr;
  meta.has_reference = reference != nullptr;

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(&out, kFormatVersion);
  put_str(&out, meta_to_json(meta).dump());

  put_tensor_section(&out, m);

  if (optimizer != nullptr) {
    put_u64(&out, static_cast<uint64_t>(optimizer->step_count()));
    put_u32(&out, static_cast<uint32_t>(optimizer->slots().size()));
    for (const AdamW::SlotState& slot : optimizer->slots()) {
      put_str(&out, slot.name);
      put_u64(&out, slot.m.size());
      for (double v : slot.m) put_f64(&out, v);
      for (double v : slot.v) put_f64(&out, v);
    }
  }
  if (reference != nullptr) put_tensor_section(&out, *reference);
  io::write_file(path, out);
}

namespace {

void read_tensor_section(Reader& r, Model& m) {
  const uint32_t count = r.u32();
  if (count != m.params().size())
    throw DimensionError("checkpoint holds " + std::to_string(count) +
                         " tensors, model has " +
                         std::to_string(m.params().size()));
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    if (!m.has_param(name))
      throw DimensionError("checkpoint tensor '" + name +
                           "' not present in the model");
    ad::Tensor t = m.param(name);
    const uint32_t rank = r.u32();
    ad::Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<int64_t>(r.u64());
    if (shape != t.shape())
      throw DimensionError("checkpoint tensor '" + name + "' has shape " +
                           ad::shape_str(shape) + ", model expects " +
                           ad::shape_str(t.shape()));
    for (double& v : t.values()) v = r.f64();
  }
}

void read_checkpoint_body(Reader& r, Model& m, const CheckpointMeta& meta,
                          int64_t* optimizer_t,
                          std::vector<AdamW::SlotState>* slots,
                          std::optional<Model>* reference) {
  read_tensor_section(r, m);
  if (meta.has_optimizer_state) {
    const int64_t t = static_cast<int64_t>(r.u64());
    const uint32_t n_slots = r.u32();
    std::vector<AdamW::SlotState> loaded(n_slots);
    for (uint32_t i = 0; i < n_slots; ++i) {
      loaded[i].name = r.str();
      const uint64_t numel = r.u64();
      loaded[i].m.resize(numel);
      for (double& v : loaded[i].m) v = r.f64();
      loaded[i].v.resize(numel);
      for (double& v : loaded[i].v) v = r.f64();
    }
    if (optimizer_t != nullptr) *optimizer_t = t;
    if (slots != nullptr) *slots = std::move(loaded);
  }
  if (meta.has_reference) {
    Model ref = Model::zero_initialized(meta.dims);
    read_tensor_section(r, ref);
    if (reference != nullptr) reference->emplace(std::move(ref));
  }
}

std::pair<CheckpointMeta, Reader> open_checkpoint(const std::string& buf) {
  Reader r{buf};
  r.need(sizeof(kMagic) + 4);
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file (bad magic)");
  r.pos = sizeof(kMagic);
  const uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw IoError("unsupported checkpoint format version " +
                  std::to_string(version));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  return {meta_from_json(header), r};
}

}  // namespace

LoadedCheckpoint checkpoint_load(const std::string& path) {
  const std::string buf = io::read_file(path);
  auto [meta, r] = open_checkpoint(buf);
  LoadedCheckpoint out{meta, Model::zero_initialized(meta.dims), 0, {}, {}};
  read_checkpoint_body(r, out.model, meta, &out.optimizer_t,
                       &out.optimizer_slots, &out.reference);
  return out;
}

void checkpoint_load_into(const std::string& path, Model& m,
                          CheckpointMeta* meta_out, int64_t* optimizer_t,
                          std::vector<AdamW::SlotState>* slots,
                          std::optional<Model>* reference) {
  const std::string buf = io::read_file(path);
  auto [meta, r] = open_checkpoint(buf);
  if (!(meta.dims == m.config()))
    throw DimensionError("checkpoint dims (d=" + std::to_string(meta.dims.d) +
                         ",heads=" + std::to_string(meta.dims.heads) +
                         ",k=" + std::to_string(meta.dims.k_neighbors) +
                         ") do not match the model");
  read_checkpoint_body(r, m, meta, optimizer_t, slots, reference);
  if (meta_out != nullptr) *meta_out = meta;
}

// --- training loop -----------------------------------------------------------

namespace {

struct PairJobs {
  std::vector<pref::PreferencePair> pairs;
  std::vector<pref::RankedPairJob> jobs;  // parallel to pairs
};

PairJobs build_jobs(const data::Dataset& dataset,
                    const data::StructureStore& structures,
                    std::vector<pref::PreferencePair> pairs) {
  PairJobs out;
  out.jobs.reserve(pairs.size());
  for (const pref::PreferencePair& p : pairs) {
    const geom::BackboneStructure& s = structures.get(p.structure_id);
    pref::RankedPairJob job;
    job.winner = {&s, dataset.records[p.winner].full_sequence()};
    job.loser = {&s, dataset.records[p.loser].full_sequence()};
    out.jobs.push_back(std::move(job));
  }
  out.pairs = std::move(pairs);
  return out;
}

double val_spearman_mean(const Model& m, const data::Dataset& dataset,
                         const data::StructureStore& structures,
                         const std::vector<size_t>& val_rows,
                         model::ScoreSpan span, model::StructureCache* cache) {
  std::vector<char> in_val(dataset.size(), 0);
  for (size_t i : val_rows) in_val[i] = 1;
  double sum = 0.0;
  int64_t n_assays = 0;
  for (const data::AssayGroup& g : dataset.assays) {
    std::vector<double> model_scores, binding;
    for (size_t i : g.rows) {
      if (!in_val[i]) continue;
      const data::VariantRecord& rec = dataset.records[i];
      ad::Tape tape(/*recording=*/false);
      model_scores.push_back(
          m.sequence_loglik(tape, structures.get(rec.structure_id),
                            rec.full_sequence(), span, cache)
              .mean());
      binding.push_back(rec.binding_score);
    }
    if (model_scores.size() < 2) continue;
    try {
      sum += evalkit::spearman(model_scores, binding);
      ++n_assays;
    } catch (const DomainError&) {
      // zero variance in this assay's validation slice; skip it
    }
  }
  if (n_assays == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum / static_cast<double>(n_assays);
}

void clip_gradients(Model& m, double clip_norm) {
  double sq = 0.0;
  for (model::Param& p : m.params()) {
    if (!p.tensor.requires_grad()) continue;
    const auto* g = p.tensor.grad_if_allocated();
    if (g == nullptr) continue;
    for (double v : *g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= clip_norm || norm == 0.0) return;
  const double scale = clip_norm / norm;
  for (model::Param& p : m.params()) {
    if (!p.tensor.requires_grad()) continue;
    auto* g = p.tensor.grad_if_allocated();
    if (g == nullptr) continue;
    for (double& v : p.tensor.grad()) v *= scale;
    (void)g;
  }
}

}  // namespace

TrainResult train(Model& m, const TrainInputs& inputs, const TrainConfig& config,
                  const FreezeMask& mask, const std::string& resume_from) {
  config.validate();
  mask.validate_against(m);
  if (inputs.dataset == nullptr || inputs.split == nullptr ||
      inputs.structures == nullptr)
    throw UsageError("train: dataset, split and structures are required");
  const data::Dataset& dataset = *inputs.dataset;
  const data::StructureStore& structures = *inputs.structures;
  if (inputs.split->train.empty())
    throw TrainAbort("refusing to train: empty training split");
  if (trainable_fraction(m, mask) == 0.0)
    throw TrainAbort("refusing to train: every parameter is frozen");

  AdamW optimizer(m, mask, config.optimizer);

  TrainResult result;
  int64_t start_epoch = 0;
  int64_t best_epoch = -1;
  double best_metric = std::numeric_limits<double>::quiet_NaN();
  std::optional<Model> reference;

  if (!resume_from.empty()) {
    CheckpointMeta meta;
    int64_t opt_t = 0;
    std::vector<AdamW::SlotState> slots;
    std::optional<Model> loaded_reference;
    checkpoint_load_into(resume_from, m, &meta, &opt_t, &slots,
                         &loaded_reference);
    if (meta.has_optimizer_state) optimizer.restore(opt_t, std::move(slots));
    start_epoch = meta.epochs_completed;
    best_epoch = meta.best_epoch;
    best_metric = meta.best_metric;
    if (meta.config_fingerprint != config.fingerprint())
      result.warnings.push_back(
          "resume: config fingerprint mismatch (checkpoint " +
          std::to_string(meta.config_fingerprint) + ", run " +
          std::to_string(config.fingerprint()) + ")");
    if (meta.objective != objective_to_string(config.objective))
      result.warnings.push_back("resume: objective changed from " +
                                meta.objective);
    if (config.objective == Objective::kDpo) {
      if (!loaded_reference)
        throw DataError(
            "resume: dpo run requires the reference snapshot in the "
            "checkpoint");
      reference = std::move(loaded_reference);
    }
  }

  if (config.objective == Objective::kDpo && !reference) {
    // frozen reference: at a fresh start this is the initial policy snapshot
    reference.emplace(Model::zero_initialized(m.config()));
    for (size_t i = 0; i < m.params().size(); ++i)
      reference->params()[i].tensor.values() = m.params()[i].tensor.values();
  }
  if (reference)
    for (model::Param& p : reference->params())
      p.tensor.set_requires_grad(false);

  const uint64_t pair_seed = Rng(config.seed).fork("train_pairs").seed();
  PairJobs train_pairs = build_jobs(
      dataset, structures,
      sample_pairs(dataset, inputs.split->train, config.delta_min,
                   config.pair_gap_max, config.max_pairs, pair_seed));

  PairJobs val_pairs;
  if (!inputs.split->val.empty()) {
    try {
      val_pairs = build_jobs(
          dataset, structures,
          sample_pairs(dataset, inputs.split->val, config.delta_min,
                       config.pair_gap_max, config.max_val_pairs,
                       Rng(config.seed).fork("val_pairs").seed()));
    } catch (const DomainError&) {
      // no admissible validation pairs; ranking accuracy stays undefined
    }
  }

  model::StructureCache cache;
  namespace fs = std::filesystem;
  if (!config.checkpoint_dir.empty())
    fs::create_directories(config.checkpoint_dir);

  CheckpointMeta meta;
  meta.dims = m.config();
  meta.frozen_names.assign(mask.frozen_names.begin(), mask.frozen_names.end());
  meta.objective = objective_to_string(config.objective);
  meta.seed = config.seed;
  meta.config_fingerprint = config.fingerprint();

  const size_t n_pairs = train_pairs.pairs.size();
  for (int64_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order(n_pairs);
    for (size_t i = 0; i < n_pairs; ++i) order[i] = i;
    Rng shuffle_rng = Rng(config.seed).fork("epoch_shuffle",
                                            static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t batch_index = 0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(config.batch_size), ++batch_index) {
      const size_t end =
          std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
      optimizer.zero_grad();
      ad::Tape tape;
      double loss_value;
      try {
        ad::Tensor batch_sum;
        bool first = true;
        for (size_t k = begin; k < end; ++k) {
          const pref::RankedPairJob& job = train_pairs.jobs[order[k]];
          ad::Tensor item_loss;
          switch (config.objective) {
            case Objective::kSimpo:
              item_loss = pref::simpo_loss(tape, m, job.winner, job.loser,
                                           config.hp, config.span, &cache);
              break;
            case Objective::kDpo:
              item_loss = pref::dpo_loss(tape, m, *reference, job.winner,
                                         job.loser, config.hp, config.span,
                                         &cache, &cache);
              break;
            case Objective::kNll:
              item_loss = tape.scale(
                  m.sequence_loglik(tape, *job.winner.structure,
                                    job.winner.sequence, config.span, &cache)
                      .sum_ll,
                  -1.0);
              break;
          }
          batch_sum = first ? item_loss : tape.add(batch_sum, item_loss);
          first = false;
        }
        ad::Tensor loss =
            tape.scale(batch_sum, 1.0 / static_cast<double>(end - begin));
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) throw NumericError("non-finite loss");
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw TrainAbort("non-finite loss at epoch " + std::to_string(epoch) +
                         " batch " + std::to_string(batch_index) + ": " +
                         e.what());
      }
      if (config.clip_norm > 0.0) clip_gradients(m, config.clip_norm);
      optimizer.step();
      loss_sum += loss_value * static_cast<double>(end - begin);
    }

    EpochMetrics train_row;
    train_row.epoch = epoch;
    train_row.split = "train";
    train_row.loss = loss_sum / static_cast<double>(n_pairs);
    result.metrics.push_back(train_row);

    const bool eval_now =
        ((epoch + 1) % config.eval_every == 0) || epoch == config.epochs - 1;
    if (eval_now) {
      EpochMetrics val_row;
      val_row.epoch = epoch;
      val_row.split = "val";
      if (!val_pairs.jobs.empty()) {
        double vloss = 0.0;
        for (const pref::RankedPairJob& job : val_pairs.jobs) {
          ad::Tape tape(/*recording=*/false);
          switch (config.objective) {
            case Objective::kSimpo:
              vloss += pref::simpo_loss(tape, m, job.winner, job.loser,
                                        config.hp, config.span, &cache)
                           .item();
              break;
            case Objective::kDpo:
              vloss += pref::dpo_loss(tape, m, *reference, job.winner,
                                      job.loser, config.hp, config.span,
                                      &cache, &cache)
                           .item();
              break;
            case Objective::kNll:
              vloss += -m.sequence_loglik(tape, *job.winner.structure,
                                          job.winner.sequence, config.span,
                                          &cache)
                            .sum();
              break;
          }
        }
        val_row.loss = vloss / static_cast<double>(val_pairs.jobs.size());
        val_row.ranking_acc = pref::pair_ranking_accuracy(
            m, val_pairs.jobs, config.hp, config.span, &cache);
      }
      val_row.spearman_mean = val_spearman_mean(
          m, dataset, structures, inputs.split->val, config.span, &cache);
      result.metrics.push_back(val_row);

      if (!std::isnan(val_row.spearman_mean) &&
          (std::isnan(best_metric) || val_row.spearman_mean > best_metric)) {
        best_metric = val_row.spearman_mean;
        best_epoch = epoch;
      }
    }

    if (!config.checkpoint_dir.empty()) {
      meta.epochs_completed = epoch + 1;
      meta.best_epoch = best_epoch;
      meta.best_metric = best_metric;
      const std::string path = config.checkpoint_dir + "/checkpoint_epoch" +
                               std::to_string(epoch) + ".bin";
      checkpoint_save(path, m, meta, &optimizer,
                      reference ? &*reference : nullptr);
      if (best_epoch == epoch) {
        fs::copy_file(path, config.checkpoint_dir + "/checkpoint_best.bin",
                      fs::copy_options::overwrite_existing);
        result.best_checkpoint_path =
            config.checkpoint_dir + "/checkpoint_best.bin";
      }
      result.final_checkpoint_path = path;
    }
  }

  result.best_epoch = best_epoch;
  result.best_spearman = best_metric;
  if (!config.checkpoint_dir.empty()) {
    meta.epochs_completed = config.epochs;
    meta.best_epoch = best_epoch;
    meta.best_metric = best_metric;
    const std::string final_path =
        config.checkpoint_dir + "/checkpoint_final.bin";
    checkpoint_save(final_path, m, meta, &optimizer,
                    reference ? &*reference : nullptr);
    result.final_checkpoint_path = final_path;
    if (result.best_checkpoint_path.empty())
      result.best_checkpoint_path = final_path;
  }
  return result;
}

}  // namespace prefopt::trainer

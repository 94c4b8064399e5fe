#include "protflow/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "protflow/checkpoint.hpp"
#include "protflow/config.hpp"
#include "protflow/flow.hpp"
#include "protflow/latent.hpp"
#include "protflow/metrics.hpp"
#include "protflow/multichain.hpp"
#include "protflow/ode.hpp"
#include "protflow/seqio.hpp"

namespace protflow {

using nlohmann::json;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::kDataError:
    case Errc::kMalformedFasta:
    case Errc::kUnknownResidue:
    case Errc::kSequenceTooLong:
    case Errc::kEmptyCorpus:
    case Errc::kInvalidHeader:
    case Errc::kEmptySequence:
    case Errc::kTooFewSamples:
      return 2;
    case Errc::kDiverged:
    case Errc::kNonFiniteLoss:
    case Errc::kNonFiniteState:
      return 3;
    case Errc::kIncompatibleCheckpoint:
    case Errc::kBadMagic:
    case Errc::kVersionUnsupported:
    case Errc::kCorruptOffset:
    case Errc::kShapeMismatch:
    case Errc::kWidthMismatch:
    case Errc::kLayoutMismatch:
      return 4;
    default:
      return 1;
  }
}

namespace {

/// One chain of a run. A single-chain run has one unit with an empty name and prefix.
struct Unit {
  std::string name;
  std::string prefix;
  std::size_t max_length = 0;
  std::string train_path;
  std::string val_path;
};

std::vector<Unit> units_of(const Config& cfg) {
  const auto names = cfg.chain_names();
  if (names.empty()) {
    return {{"", "", cfg.get_size("model.L_max"), cfg.get_string("data.train_path"),
             cfg.get_string("data.val_path")}};
  }
  std::vector<Unit> out;
  for (const auto& n : names) {
    const std::string p = "chain." + n + ".";
    Unit u{n, p, cfg.get_size("model.L_max"), "", ""};
    if (cfg.has(p + "L_max")) u.max_length = cfg.get_size(p + "L_max");
    if (cfg.has(p + "train_path")) u.train_path = cfg.get_string(p + "train_path");
    if (cfg.has(p + "val_path")) u.val_path = cfg.get_string(p + "val_path");
    out.push_back(u);
  }
  return out;
}

std::vector<std::string> read_sequences(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(Errc::kDataError, what + " is not set");
  std::vector<std::string> out;
  for (auto& r : read_fasta_file(path)) out.push_back(std::move(r.sequence));
  if (out.empty()) throw Error(Errc::kEmptyCorpus, path + " has no records");
  return out;
}

std::vector<TokenizedSequence> padded_corpus(const std::vector<std::string>& seqs, std::size_t max_length,
                                             const std::string& path) {
  std::vector<TokenizedSequence> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    try {
      out.push_back(pad_to(tokenize(seqs[i]), max_length));
    } catch (const Error& e) {
      throw Error(Errc::kDataError, path + " record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::uint64_t unit_seed(std::uint64_t seed, const Unit& u) {
  if (u.name.empty()) return seed;
  return Rng(seed).split(u.name).next_u64();
}

LatentTrainConfig latent_config(const Config& cfg, const std::string& section, std::uint64_t seed) {
  LatentTrainConfig c;
  c.steps = cfg.get_size(section + ".steps");
  c.batch_rows = cfg.get_size(section + ".batch_rows");
  c.lr = cfg.get_double(section + ".lr");
  c.lr_min = cfg.get_double(section + ".lr_min");
  c.warmup = cfg.get_size(section + ".warmup");
  c.weight_decay = cfg.get_double(section + ".weight_decay");
  c.seed = seed;
  if (c.batch_rows == 0) throw Error(Errc::kConfigError, section + ".batch_rows must be positive");
  return c;
}

FlowTrainConfig flow_config(const Config& cfg, std::size_t steps) {
  FlowTrainConfig c;
  c.steps = steps;
  c.batch = cfg.get_size("train.batch");
  c.lr = cfg.get_double("train.lr");
  c.lr_min = cfg.get_double("train.lr_min");
  c.warmup = cfg.get_size("train.warmup");
  c.clip = cfg.get_double("train.clip");
  c.weight_decay = cfg.get_double("train.weight_decay");
  c.ema_decay = cfg.get_double("train.ema");
  c.seed = cfg.get_u64("train.seed");
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(Errc::kConfigError, e.what());
  }
  return c;
}

SolverConfig solver_config(const Config& cfg) {
  SolverConfig s;
  try {
    s.method = parse_solver_method(cfg.get_string("solver.method"));
  } catch (const Error& e) {
    throw Error(Errc::kConfigError, e.what());
  }
  s.steps = cfg.get_size("solver.steps");
  s.atol = cfg.get_double("solver.atol");
  s.rtol = cfg.get_double("solver.rtol");
  s.max_nfe = cfg.get_size("solver.max_nfe");
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(Errc::kConfigError, e.what());
  }
  return s;
}

std::string trace_of(const LatentTrainReport& r) {
  std::ostringstream out;
  out.precision(9);
  out << "step,loss,lr,grad_norm\n";
  for (std::size_t i = 0; i < r.loss_trace.size(); ++i)
    out << i << ',' << r.loss_trace[i] << ',' << r.lr_trace[i] << ',' << r.grad_norm_trace[i] << '\n';
  return out.str();
}

std::string trace_path(const std::string& out, const Unit& u) {
  return u.name.empty() ? out + ".loss.csv" : out + "." + u.name + ".loss.csv";
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Shared options of the training subcommands.
struct TrainArgs {
  std::string config_path;
  std::string in_path;
  std::string out_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_train_options(CLI::App* cmd, TrainArgs& a, bool needs_in) {
  cmd->add_option("--config", a.config_path, "config file");
  auto* in = cmd->add_option("--in", a.in_path, "input checkpoint");
  if (needs_in) in->required();
  cmd->add_option("--out", a.out_path, "output checkpoint")->required();
  cmd->add_option("--set", a.sets, "override, key=value")->take_all();
  cmd->add_option("--seed", a.seed, "overrides train.seed");
}

Config resolve_config(const TrainArgs& a, const Checkpoint* parent) {
  Config cfg;
  if (!a.config_path.empty()) {
    cfg = Config::load(a.config_path);
  } else if (parent) {
    cfg = Config::from_json(parent->config);
  } else {
    throw Error(Errc::kConfigError, "--config is required");
  }
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(Errc::kConfigError, "--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (a.seed) cfg.set("train.seed", std::to_string(*a.seed));
  return cfg;
}

LatentPipeline load_pipeline(const Checkpoint& ckpt, const std::string& prefix) {
  LatentPipeline p;
  p.encoder = get_encoder(ckpt, prefix);
  p.decoder = get_decoder(ckpt, prefix, p.encoder.dim());
  p.stats = get_stats(ckpt, prefix);
  p.compressor = get_compressor(ckpt, prefix);
  if (p.stats.dim() != p.encoder.dim() || p.compressor.dim() != p.encoder.dim() ||
      p.compressor.max_length() != p.encoder.max_length()) {
    throw Error(Errc::kIncompatibleCheckpoint, "latent components disagree in shape");
  }
  return p;
}

/// Units as recorded in a checkpoint.
std::vector<Unit> checkpoint_units(const Checkpoint& ckpt) {
  std::vector<Unit> out;
  if (ckpt.metadata.contains("chains")) {
    for (const auto& c : ckpt.metadata.at("chains")) {
      const std::string n = c.at("name").get<std::string>();
      out.push_back({n, "chain." + n + ".", c.at("max_length").get<std::size_t>(), "", ""});
    }
  } else {
    if (!ckpt.metadata.contains("encoder")) throw Error(Errc::kIncompatibleCheckpoint, "checkpoint has no encoder");
    out.push_back({"", "", ckpt.metadata.at("encoder").at("max_length").get<std::size_t>(), "", ""});
  }
  return out;
}

void put_units(Checkpoint& ckpt, const std::vector<Unit>& units) {
  if (units.size() == 1 && units[0].name.empty()) return;
  json chains = json::array();
  for (const auto& u : units) chains.push_back({{"name", u.name}, {"max_length", u.max_length}});
  ckpt.metadata["chains"] = chains;
}

void check_units_match(const std::vector<Unit>& cfg_units, const std::vector<Unit>& ckpt_units) {
  if (cfg_units.size() != ckpt_units.size()) {
    throw Error(Errc::kIncompatibleCheckpoint, "config and checkpoint disagree on the chain layout");
  }
  for (std::size_t i = 0; i < cfg_units.size(); ++i) {
    if (cfg_units[i].name != ckpt_units[i].name || cfg_units[i].max_length != ckpt_units[i].max_length) {
      throw Error(Errc::kIncompatibleCheckpoint, "config and checkpoint disagree on the chain layout");
    }
  }
}

Checkpoint derive(const Checkpoint& parent, const Config& cfg) {
  Checkpoint ckpt = parent;
  ckpt.config = cfg.to_json();
  return ckpt;
}

// ---------------------------------------------------------------------------

int cmd_train_decoder(const TrainArgs& a, std::ostream& out) {
  Config cfg = resolve_config(a, nullptr);
  cfg.check_paths();
  const auto units = units_of(cfg);
  const std::uint64_t seed = cfg.get_u64("train.seed");
  const std::size_t dim = cfg.get_size("model.D");
  if (dim == 0) throw Error(Errc::kConfigError, "model.D must be positive");

  Checkpoint ckpt;
  ckpt.config = cfg.to_json();
  for (const auto& u : units) {
    if (u.max_length == 0) throw Error(Errc::kConfigError, "maximum length must be positive");
    const auto corpus = padded_corpus(read_sequences(u.train_path, u.prefix + "train_path"), u.max_length, u.train_path);
    const std::uint64_t s = unit_seed(seed, u);
    Rng enc_rng = Rng(s).split("encoder");
    Encoder encoder(dim, u.max_length, enc_rng);
    nn::round_to_float(encoder.params());
    Rng dec_rng = Rng(s).split("decoder");
    Decoder decoder(dim, dec_rng);
    const LatentTrainReport report = train_decoder(corpus, encoder, decoder, latent_config(cfg, "decoder", s));
    nn::round_to_float(decoder.params());
    put_encoder(ckpt, u.prefix, encoder);
    put_decoder(ckpt, u.prefix, decoder);
    write_file_atomic(trace_path(a.out_path, u), trace_of(report));
    out << (u.name.empty() ? "" : u.name + ": ") << "decoder heldout token accuracy "
        << fmt(report.heldout_token_accuracy) << ", sequence accuracy " << fmt(report.heldout_sequence_accuracy)
        << '\n';
  }
  put_units(ckpt, units);
  ckpt.step = cfg.get_size("decoder.steps");
  ckpt.rng = Rng(seed).split("train-decoder").state();
  save_checkpoint(ckpt, a.out_path);
  return 0;
}

int cmd_train_compressor(const TrainArgs& a, std::ostream& out) {
  const Checkpoint parent = load_checkpoint(a.in_path);
  Config cfg = resolve_config(a, &parent);
  cfg.check_paths();
  const auto units = units_of(cfg);
  check_units_match(units, checkpoint_units(parent));
  const std::uint64_t seed = cfg.get_u64("train.seed");
  const std::size_t ratio = cfg.get_size("model.ratio_c");

  Checkpoint ckpt = derive(parent, cfg);
  for (const auto& u : units) {
    LatentPipeline frozen;
    frozen.encoder = get_encoder(parent, u.prefix);
    frozen.decoder = get_decoder(parent, u.prefix, frozen.encoder.dim());
    check_ratio(frozen.encoder.dim(), ratio);
    const auto corpus = padded_corpus(read_sequences(u.train_path, u.prefix + "train_path"), u.max_length, u.train_path);
    frozen.stats = fit_smoothing(
        [&](const std::function<void(const Matrix&)>& sink) {
          for (const auto& ts : corpus) sink(frozen.encoder.encode(ts));
        },
        cfg.get_double("compressor.clamp_k"));
    round_stats_to_float(frozen.stats);
    const std::uint64_t s = unit_seed(seed, u);
    Rng comp_rng = Rng(s).split("compressor");
    Compressor compressor(frozen.encoder.dim(), ratio, u.max_length, comp_rng);
    const LatentTrainReport report =
        train_compressor(corpus, frozen, compressor, latent_config(cfg, "compressor", s));
    nn::round_to_float(compressor.params());
    put_stats(ckpt, u.prefix, frozen.stats);
    put_compressor(ckpt, u.prefix, compressor);
    write_file_atomic(trace_path(a.out_path, u), trace_of(report));
    frozen.compressor = compressor;
    const ReconstructionScore score = reconstruction_accuracy(corpus, frozen, true);
    out << (u.name.empty() ? "" : u.name + ": ") << "compressor heldout mse " << fmt(report.heldout_mse)
        << ", round-trip token accuracy " << fmt(score.token_accuracy) << '\n';
  }
  ckpt.step = cfg.get_size("compressor.steps");
  ckpt.rng = Rng(seed).split("train-compressor").state();
  ckpt.parent_hash = file_hash(a.in_path);
  save_checkpoint(ckpt, a.out_path);
  return 0;
}

struct LoadedModel {
  std::vector<Unit> units;
  std::vector<std::shared_ptr<const LatentPipeline>> pipelines;
  ChainLayout layout;
};

LoadedModel load_latent_model(const Checkpoint& ckpt) {
  LoadedModel m;
  m.units = checkpoint_units(ckpt);
  std::vector<ChainSpec> specs;
  for (const auto& u : m.units) {
    auto p = std::make_shared<const LatentPipeline>(load_pipeline(ckpt, u.prefix));
    if (p->max_length() != u.max_length) throw Error(Errc::kIncompatibleCheckpoint, "chain length mismatch");
    specs.push_back({u.name.empty() ? "main" : u.name, u.max_length, p->latent_width(), p});
    m.pipelines.push_back(std::move(p));
  }
  m.layout = ChainLayout(std::move(specs));
  return m;
}

int cmd_train_flow(const TrainArgs& a, std::ostream& out) {
  const Checkpoint parent = load_checkpoint(a.in_path);
  Config cfg = resolve_config(a, &parent);
  cfg.check_paths();
  const auto units = units_of(cfg);
  check_units_match(units, checkpoint_units(parent));
  const LoadedModel model = load_latent_model(parent);

  std::vector<std::vector<std::string>> train(units.size());
  for (std::size_t c = 0; c < units.size(); ++c) {
    train[c] = read_sequences(units[c].train_path, units[c].prefix + "train_path");
    if (train[c].size() != train[0].size()) {
      throw Error(Errc::kDataError, units[c].train_path + " has " + std::to_string(train[c].size()) +
                                        " records, expected " + std::to_string(train[0].size()));
    }
  }
  std::vector<Matrix> dataset;
  dataset.reserve(train[0].size());
  for (std::size_t i = 0; i < train[0].size(); ++i) {
    std::vector<std::string> chains;
    for (std::size_t c = 0; c < units.size(); ++c) chains.push_back(train[c][i]);
    try {
      dataset.push_back(joint_latent(chains, model.layout));
    } catch (const Error& e) {
      if (exit_code_for(e) == 2) throw Error(Errc::kDataError, "record " + std::to_string(i + 1) + ": " + e.what());
      throw;
    }
  }

  Checkpoint ckpt = derive(parent, cfg);
  json lengths = json::object();
  for (std::size_t c = 0; c < units.size(); ++c) {
    const std::string& vp = units[c].val_path;
    const auto seqs = vp.empty() ? train[c] : read_sequences(vp, units[c].prefix + "val_path");
    lengths[units[c].name] = lengths_to_json(fit_length_distribution(seqs, units[c].max_length));
  }
  ckpt.metadata["lengths"] = lengths;

  VectorFieldConfig vc;
  vc.latent_width = model.layout.width();
  vc.width = cfg.get_size("model.width");
  vc.depth = cfg.get_size("model.depth");
  vc.seq_len = model.layout.total_length();
  vc.attention = cfg.get_bool("model.attention");
  const std::uint64_t seed = cfg.get_u64("train.seed");
  Rng init = Rng(seed).split("flow-init");
  VectorField field(vc, init);
  const FlowTrainReport report = train_rf(dataset, flow_config(cfg, cfg.get_size("train.steps")), field);
  nn::round_to_float(field.params());
  put_field(ckpt, "", field);
  write_file_atomic(a.out_path + ".loss.csv", trace_csv(report));
  ckpt.step = cfg.get_size("train.steps");
  ckpt.rng = Rng(seed).split("train-flow").state();
  ckpt.parent_hash = file_hash(a.in_path);
  save_checkpoint(ckpt, a.out_path);
  out << "flow final loss " << (report.trace.empty() ? std::string("n/a") : fmt(report.trace.back().loss))
      << ", parameters " << field.parameter_count() << '\n';
  return 0;
}

int cmd_reflow(const TrainArgs& a, std::ostream& out) {
  const Checkpoint parent = load_checkpoint(a.in_path);
  Config cfg = resolve_config(a, &parent);
  VectorField field = get_field(parent, "");
  const std::size_t m = cfg.get_size("reflow.pairs");
  if (m == 0) throw Error(Errc::kConfigError, "reflow.pairs must be positive (empty coupling set)");
  const SolverConfig solver = solver_config(cfg);
  const std::uint64_t seed = cfg.get_u64("train.seed");

  const ReflowPairs pairs = reflow_pairs(field, solver, m, Rng(seed).split("reflow-pairs"));
  const double before = straightness(field, pairs.pairs);
  const FlowTrainReport report = train_reflow(pairs.pairs, flow_config(cfg, cfg.get_size("reflow.steps")), field);
  nn::round_to_float(field.params());
  const double after = straightness(field, pairs.pairs);

  Checkpoint ckpt = derive(parent, cfg);
  put_field(ckpt, "", field);
  ckpt.metadata["reflow"] = {{"pairs", m},
                             {"solver", std::string(solver_method_name(solver.method))},
                             {"solver_steps", solver.steps},
                             {"nfe_per_pair", pairs.nfe_per_pair},
                             {"straightness_before", before},
                             {"straightness_after", after}};
  ckpt.step = parent.step + cfg.get_size("reflow.steps");
  ckpt.rng = Rng(seed).split("reflow").state();
  ckpt.parent_hash = file_hash(a.in_path);
  write_file_atomic(a.out_path + ".loss.csv", trace_csv(report));
  save_checkpoint(ckpt, a.out_path);
  out << "straightness before " << fmt(before) << ", after " << fmt(after) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string checkpoint;
  std::string out_path;
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::optional<std::string> method;
  std::optional<std::size_t> steps;
  std::optional<double> atol, rtol;
  std::optional<std::size_t> max_nfe;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const LoadedModel model = load_latent_model(ckpt);
  const VectorField field = get_field(ckpt, "");
  if (!ckpt.metadata.contains("lengths")) throw Error(Errc::kIncompatibleCheckpoint, "checkpoint has no length distribution");
  std::vector<LengthDistribution> lengths;
  for (const auto& u : model.units) {
    if (!ckpt.metadata.at("lengths").contains(u.name)) {
      throw Error(Errc::kIncompatibleCheckpoint, "no length distribution for chain '" + u.name + "'");
    }
    lengths.push_back(lengths_from_json(ckpt.metadata.at("lengths").at(u.name)));
  }

  Config cfg = Config::from_json(ckpt.config);
  if (a.method) cfg.set("solver.method", *a.method);
  if (a.steps) cfg.set("solver.steps", std::to_string(*a.steps));
  if (a.atol) cfg.set("solver.atol", fmt(*a.atol));
  if (a.rtol) cfg.set("solver.rtol", fmt(*a.rtol));
  if (a.max_nfe) cfg.set("solver.max_nfe", std::to_string(*a.max_nfe));
  const SolverConfig solver = solver_config(cfg);

  const Rng rng = Rng(a.seed).split("sample");
  std::vector<FastaRecord> records;
  double mean_nfe = 0.0;
  if (model.units.size() == 1 && model.units[0].name.empty()) {
    const SampleBatch batch = sample_batch(field, *model.pipelines[0], lengths[0], a.n, solver, rng);
    for (std::size_t i = 0; i < batch.sequences.size(); ++i) records.push_back({"gen_" + std::to_string(i), batch.sequences[i]});
    mean_nfe = batch.mean_nfe;
  } else {
    const MultichainBatch batch = sample_multichain(field, model.layout, lengths, a.n, solver, rng);
    records = multichain_records(batch, model.layout);
    mean_nfe = batch.mean_nfe;
  }
  // Empty sequences cannot be represented in FASTA; lengths are always >= 1.
  write_file_atomic(a.out_path, write_fasta(records));
  json sidecar = {{"seed", a.seed},
                  {"solver", std::string(solver_method_name(solver.method))},
                  {"steps", solver.steps},
                  {"mean_nfe", mean_nfe},
                  {"n", a.n}};
  write_file_atomic(a.out_path + ".json", sidecar.dump(2) + "\n");
  out << "wrote " << a.n << " samples to " << a.out_path << ", mean nfe " << fmt(mean_nfe) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string gen_path;
  std::string ref_path;
  std::string out_prefix = "report";
  std::size_t k = 6;
  std::string checkpoint;
  std::string external_scores;
  std::vector<double> thresholds;
  std::uint64_t seed = 0;
  std::size_t ot_cap = kDefaultOtCap;
};

std::vector<double> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kDataError, "cannot read " + path);
  std::vector<double> scores;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw Error(Errc::kDataError, path + " line " + std::to_string(lineno) + ": expected sequence_id,score");
    }
    const std::string field = line.substr(comma + 1);
    try {
      std::size_t used = 0;
      const double v = std::stod(field, &used);
      if (used != field.size() || !std::isfinite(v)) throw std::invalid_argument("score");
      scores.push_back(v);
    } catch (const std::logic_error&) {
      if (lineno == 1) continue;  // header row
      throw Error(Errc::kDataError, path + " line " + std::to_string(lineno) + ": bad score '" + field + "'");
    }
  }
  if (scores.empty()) throw Error(Errc::kDataError, path + " has no scores");
  return scores;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<std::string> gen, ref;
  for (auto& r : read_fasta_file(a.gen_path)) gen.push_back(std::move(r.sequence));
  for (auto& r : read_fasta_file(a.ref_path)) ref.push_back(std::move(r.sequence));
  if (gen.empty() || ref.empty()) throw Error(Errc::kDataError, "generated and reference sets must be nonempty");
  for (const auto* set : {&gen, &ref}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      try {
        tokenize((*set)[i]);
      } catch (const Error& e) {
        throw Error(Errc::kDataError, (set == &gen ? a.gen_path : a.ref_path) + " record " + std::to_string(i + 1) +
                                          ": " + e.what());
      }
    }
  }

  json options = {{"k", a.k}, {"thresholds", a.thresholds}, {"ot_cap", a.ot_cap}, {"seed", a.seed}};
  std::optional<Encoder> encoder;
  std::string embedder = "default";
  std::size_t longest = 0;
  for (const auto* set : {&gen, &ref})
    for (const auto& s : *set) longest = std::max(longest, s.size());
  if (!a.checkpoint.empty()) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const auto units = checkpoint_units(ckpt);
    encoder = get_encoder(ckpt, units.front().prefix);
    embedder = "checkpoint:" + file_hash(a.checkpoint);
    options["checkpoint"] = file_hash(a.checkpoint);
  } else {
    Rng rng = Rng(a.seed).split("eval-encoder");
    encoder.emplace(64, longest, rng);
  }
  const std::string config_hash = fnv1a_hex([&] {
    const std::string s = options.dump();
    return std::vector<std::uint8_t>(s.begin(), s.end());
  }());

  json rows = json::array();
  auto emit = [&](const std::string& metric, const json& value) {
    rows.push_back({{"metric", metric}, {"value", value}, {"n_gen", gen.size()}, {"n_ref", ref.size()},
                    {"config_hash", config_hash}, {"seed", a.seed}});
  };
  auto skip = [&](const std::string& metric, const std::string& reason) { emit(metric, "skipped: " + reason); };

  auto mean_of = [](const std::vector<std::string>& seqs, auto fn) {
    double s = 0.0;
    for (const auto& x : seqs) s += fn(x);
    return s / static_cast<double>(seqs.size());
  };
  emit("entropy_gen", mean_of(gen, [](const std::string& s) { return shannon_entropy(s); }));
  emit("entropy_ref", mean_of(ref, [](const std::string& s) { return shannon_entropy(s); }));

  const std::string js = "kmer_jaccard_" + std::to_string(a.k);
  const JaccardResult jac = kmer_jaccard(gen, ref, a.k);
  if (jac.both_empty) skip(js, "no sequence has " + std::to_string(a.k) + "-mers");
  else emit(js, jac.value);

  if (gen.size() >= 2) emit("int_div", int_div(gen));
  else skip("int_div", "fewer than 2 generated sequences");
  emit("e_dist", mean_edit_to_reference(gen, ref));
  emit("uniqueness", uniqueness(gen));

  const bool fits = longest <= encoder->max_length();
  if (!fits) {
    skip("frechet_distance", "sequences longer than the embedder's maximum length");
    skip("mmd_rbf", "sequences longer than the embedder's maximum length");
  } else {
    const Matrix eg = mean_pooled_embeddings(*encoder, gen), er = mean_pooled_embeddings(*encoder, ref);
    if (gen.size() >= 2 && ref.size() >= 2) emit("frechet_distance", frechet_distance(eg, er));
    else skip("frechet_distance", "fewer than 2 sequences in a set");
    if (gen.size() != ref.size()) {
      skip("mmd_rbf", "unequal set sizes");
    } else {
      try {
        emit("mmd_rbf", mmd_rbf_median(eg, er));
      } catch (const Error& e) {
        if (e.code() != Errc::kBadBandwidth) throw;
        skip("mmd_rbf", "median pairwise distance is zero");
      }
    }
  }

  if (gen.size() != ref.size()) skip("ot_levenshtein", "unequal set sizes");
  else if (gen.size() > a.ot_cap) skip("ot_levenshtein", "batch larger than " + std::to_string(a.ot_cap));
  else emit("ot_levenshtein", ot_levenshtein(gen, ref, a.ot_cap));

  const WPropertyResult wp = w_property(gen, ref);
  if (wp.skipped.size() == PropertyVector::kCount) skip("w_property", "every property is constant");
  else emit("w_property", wp.value);

  const UnigramScorer unigram(ref);
  const BigramScorer bigram(ref);
  emit("pppl_unigram", mean_of(gen, [&](const std::string& s) { return pseudoperplexity(s, unigram); }));
  emit("pppl_bigram", mean_of(gen, [&](const std::string& s) { return pseudoperplexity(s, bigram); }));

  if (a.external_scores.empty()) {
    skip("threshold_proportion", "no external scores");
  } else {
    const auto scores = read_scores(a.external_scores);
    if (a.thresholds.empty()) skip("threshold_proportion", "no thresholds given");
    for (double t : a.thresholds) emit("proportion_above_" + fmt(t), threshold_proportion(scores, t));
  }

  json report = {{"config_hash", config_hash}, {"seed", a.seed}, {"embedder", embedder},
                 {"gen_path", a.gen_path},     {"ref_path", a.ref_path}, {"metrics", rows}};
  write_file_atomic(a.out_prefix + ".json", report.dump(2) + "\n");
  std::ostringstream csv;
  csv.precision(17);
  csv << "metric,value,n_gen,n_ref,config_hash,seed\n";
  for (const auto& r : rows) {
    csv << r["metric"].get<std::string>() << ',';
    if (r["value"].is_string()) csv << '"' << r["value"].get<std::string>() << '"';
    else csv << r["value"].get<double>();
    csv << ',' << gen.size() << ',' << ref.size() << ',' << config_hash << ',' << a.seed << '\n';
  }
  write_file_atomic(a.out_prefix + ".csv", csv.str());
  for (const auto& r : rows) out << r["metric"].get<std::string>() << " = " << r["value"].dump() << '\n';
  return 0;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(path);
  json tensors = json::array();
  for (const auto& [name, m] : ckpt.tensors) tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
  json view = {{"file_hash", file_hash(path)},
               {"step", ckpt.step},
               {"rng", {{"key", ckpt.rng.key}, {"counter", ckpt.rng.counter}}},
               {"lineage", {{"parent", ckpt.parent_hash}}},
               {"config", ckpt.config},
               {"metadata", ckpt.metadata},
               {"tensors", tensors}};
  out << view.dump(2) << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent flow matching for protein sequences", "protflow"};
  app.require_subcommand(1);

  TrainArgs dec_args, comp_args, flow_args, reflow_args;
  auto* dec = app.add_subcommand("train-decoder", "train the residue decoder on a frozen encoder");
  add_train_options(dec, dec_args, false);
  auto* comp = app.add_subcommand("train-compressor", "fit smoothing statistics and train the compressor");
  add_train_options(comp, comp_args, true);
  auto* flow = app.add_subcommand("train-flow", "train the vector field on compressed latents");
  add_train_options(flow, flow_args, true);
  auto* reflow = app.add_subcommand("reflow", "fine-tune the vector field on its own couplings");
  add_train_options(reflow, reflow_args, true);

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "generate sequences");
  sample->add_option("--checkpoint", sample_args.checkpoint)->required();
  sample->add_option("--out", sample_args.out_path, "output FASTA")->required();
  sample->add_option("--n", sample_args.n, "number of samples");
  sample->add_option("--seed", sample_args.seed);
  sample->add_option("--method", sample_args.method, "euler, dopri5 or dopri5-adaptive");
  sample->add_option("--steps", sample_args.steps);
  sample->add_option("--atol", sample_args.atol);
  sample->add_option("--rtol", sample_args.rtol);
  sample->add_option("--max-nfe", sample_args.max_nfe);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "compare generated sequences with a reference set");
  eval->add_option("--gen", eval_args.gen_path)->required();
  eval->add_option("--ref", eval_args.ref_path)->required();
  eval->add_option("--out", eval_args.out_prefix, "writes <out>.json and <out>.csv");
  eval->add_option("--k", eval_args.k, "k-mer length");
  eval->add_option("--checkpoint", eval_args.checkpoint, "embed with this checkpoint's encoder");
  eval->add_option("--external-scores", eval_args.external_scores, "CSV of sequence_id,score");
  eval->add_option("--thresholds", eval_args.thresholds)->delimiter(',');
  eval->add_option("--seed", eval_args.seed);
  eval->add_option("--ot-cap", eval_args.ot_cap);

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect-checkpoint", "print a checkpoint header");
  inspect->add_option("checkpoint", inspect_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*dec) return cmd_train_decoder(dec_args, out);
    if (*comp) return cmd_train_compressor(comp_args, out);
    if (*flow) return cmd_train_flow(flow_args, out);
    if (*reflow) return cmd_reflow(reflow_args, out);
    if (*sample) return cmd_sample(sample_args, out);
    if (*eval) return cmd_eval(eval_args, out);
    if (*inspect) return cmd_inspect(inspect_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace protflow

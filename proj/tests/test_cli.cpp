#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "json.hpp"
#include "protflow/checkpoint.hpp"
#include "protflow/cli.hpp"
#include "protflow/error.hpp"
#include "protflow/seqio.hpp"

using namespace protflow;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string corpus_fasta(std::uint64_t seed, std::size_t n, std::size_t max_len) {
  Rng rng(seed);
  std::vector<FastaRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    const std::size_t len = 2 + rng.uniform_int(max_len - 1);
    for (std::size_t j = 0; j < len; ++j) s += Vocabulary::kResidues[rng.uniform_int(6)];
    recs.push_back({"s" + std::to_string(i), s});
  }
  return write_fasta(recs);
}

// Small end-to-end fixture shared by the tests below.
struct Workspace {
  fs::path dir;
  std::string cfg;

  Workspace() {
    dir = fs::temp_directory_path() / ("protflow_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    spit(dir / "train.fasta", corpus_fasta(1, 120, 8));
    spit(dir / "val.fasta", corpus_fasta(2, 20, 8));
    cfg = (dir / "toy.cfg").string();
    spit(cfg,
         "model.D = 16\nmodel.L_max = 8\nmodel.ratio_c = 4\nmodel.depth = 2\nmodel.width = 16\n"
         "decoder.steps = 60\ndecoder.batch_rows = 64\ndecoder.warmup = 5\n"
         "compressor.steps = 60\ncompressor.batch_rows = 64\ncompressor.warmup = 5\n"
         "train.steps = 40\ntrain.batch = 16\ntrain.warmup = 5\n"
         "reflow.pairs = 16\nreflow.steps = 20\nsolver.steps = 2\n"
         "data.train_path = " + (dir / "train.fasta").string() + "\n"
         "data.val_path = " + (dir / "val.fasta").string() + "\n");
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  void train_all() {
    REQUIRE(run({"train-decoder", "--config", cfg, "--out", path("dec.ckpt")}).code == 0);
    REQUIRE(run({"train-compressor", "--in", path("dec.ckpt"), "--out", path("comp.ckpt")}).code == 0);
    REQUIRE(run({"train-flow", "--in", path("comp.ckpt"), "--out", path("flow.ckpt")}).code == 0);
  }
};

}  // namespace

TEST_CASE("exit codes map error families") {
  CHECK(exit_code_for(Error(Errc::kConfigError, "x")) == 1);
  CHECK(exit_code_for(Error(Errc::kDataError, "x")) == 2);
  CHECK(exit_code_for(Error(Errc::kMalformedFasta, "x")) == 2);
  CHECK(exit_code_for(Error(Errc::kDiverged, "x")) == 3);
  CHECK(exit_code_for(Error(Errc::kIncompatibleCheckpoint, "x")) == 4);
  CHECK(exit_code_for(Error(Errc::kBadMagic, "x")) == 4);
  CHECK(run({}).code == 1);
  CHECK(run({"no-such-command"}).code == 1);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("configuration and data errors") {
  Workspace ws;
  spit(ws.path("missing.cfg"), "data.train_path = " + ws.path("nope.fasta") + "\n");
  const Run missing = run({"train-decoder", "--config", ws.path("missing.cfg"), "--out", ws.path("x.ckpt")});
  CHECK(missing.code == 2);
  CHECK(missing.err.find(ws.path("nope.fasta")) != std::string::npos);

  spit(ws.path("bad.cfg"), "model.bogus = 3\n");
  CHECK(run({"train-decoder", "--config", ws.path("bad.cfg"), "--out", ws.path("x.ckpt")}).code == 1);
  CHECK(run({"train-decoder", "--out", ws.path("x.ckpt")}).code == 1);
  CHECK(run({"train-decoder", "--config", ws.cfg, "--set", "model.D", "--out", ws.path("x.ckpt")}).code == 1);

  spit(ws.path("bad.fasta"), ">a\nACDB\n");
  CHECK(run({"train-decoder", "--config", ws.cfg, "--set", "data.train_path=" + ws.path("bad.fasta"), "--out",
             ws.path("x.ckpt")}).code == 2);
  spit(ws.path("long.fasta"), ">a\nACDEFGHIKL\n");
  CHECK(run({"train-decoder", "--config", ws.cfg, "--set", "data.train_path=" + ws.path("long.fasta"), "--out",
             ws.path("x.ckpt")}).code == 2);

  spit(ws.path("junk.ckpt"), "not a checkpoint");
  CHECK(run({"train-compressor", "--in", ws.path("junk.ckpt"), "--out", ws.path("x.ckpt")}).code == 4);
  CHECK(run({"sample", "--checkpoint", ws.path("junk.ckpt"), "--out", ws.path("x.fasta")}).code == 4);
  CHECK(run({"inspect-checkpoint", ws.path("junk.ckpt")}).code == 4);
  CHECK(run({"eval", "--gen", ws.path("absent.fasta"), "--ref", ws.path("absent.fasta")}).code == 2);
}

TEST_CASE("pipeline end to end with determinism and lineage") {
  Workspace ws;
  ws.train_all();

  // Same seed, same bytes.
  REQUIRE(run({"train-decoder", "--config", ws.cfg, "--out", ws.path("dec2.ckpt")}).code == 0);
  CHECK(slurp(ws.path("dec.ckpt")) == slurp(ws.path("dec2.ckpt")));
  REQUIRE(run({"train-decoder", "--config", ws.cfg, "--seed", "9", "--out", ws.path("dec3.ckpt")}).code == 0);
  CHECK(slurp(ws.path("dec.ckpt")) != slurp(ws.path("dec3.ckpt")));
  CHECK(slurp(ws.path("dec.ckpt.loss.csv")).rfind("step,loss,lr,grad_norm\n", 0) == 0);
  CHECK(fs::exists(ws.path("flow.ckpt.loss.csv")));

  // A decoder-only checkpoint cannot sample.
  CHECK(run({"sample", "--checkpoint", ws.path("dec.ckpt"), "--out", ws.path("x.fasta")}).code == 4);
  // Flow training needs a compressor.
  CHECK(run({"train-flow", "--in", ws.path("dec.ckpt"), "--out", ws.path("x.ckpt")}).code == 4);

  const Run inspect = run({"inspect-checkpoint", ws.path("flow.ckpt")});
  REQUIRE(inspect.code == 0);
  const nlohmann::json view = nlohmann::json::parse(inspect.out);
  CHECK(view["file_hash"] == file_hash(ws.path("flow.ckpt")));
  CHECK(view["metadata"].contains("lengths"));

  // Reflow records its parent.
  CHECK(run({"reflow", "--in", ws.path("flow.ckpt"), "--out", ws.path("x.ckpt"), "--set", "reflow.pairs=0"}).code == 1);
  const Run reflow = run({"reflow", "--in", ws.path("flow.ckpt"), "--out", ws.path("reflow.ckpt")});
  REQUIRE(reflow.code == 0);
  CHECK(reflow.out.find("straightness") != std::string::npos);
  const Checkpoint rc = load_checkpoint(ws.path("reflow.ckpt"));
  CHECK(rc.parent_hash == file_hash(ws.path("flow.ckpt")));
  CHECK(rc.metadata.contains("reflow"));

  // Sampling is a pure function of the seed.
  REQUIRE(run({"sample", "--checkpoint", ws.path("flow.ckpt"), "--out", ws.path("a.fasta"), "--n", "12", "--seed", "3"}).code == 0);
  REQUIRE(run({"sample", "--checkpoint", ws.path("flow.ckpt"), "--out", ws.path("b.fasta"), "--n", "12", "--seed", "3"}).code == 0);
  CHECK(slurp(ws.path("a.fasta")) == slurp(ws.path("b.fasta")));
  const auto recs = read_fasta_file(ws.path("a.fasta"));
  REQUIRE(recs.size() == 12);
  CHECK(recs[0].header == "gen_0");
  for (const auto& r : recs) CHECK(r.sequence.size() <= 8);
  const nlohmann::json side = nlohmann::json::parse(slurp(ws.path("a.fasta.json")));
  CHECK(side["n"] == 12);
  CHECK(side["seed"] == 3);
  CHECK(side["solver"] == "dopri5");
  CHECK(side["mean_nfe"] == 12.0);

  REQUIRE(run({"sample", "--checkpoint", ws.path("reflow.ckpt"), "--out", ws.path("e.fasta"), "--n", "5", "--method",
               "euler", "--steps", "1"}).code == 0);
  CHECK(read_fasta_file(ws.path("e.fasta")).size() == 5);
  CHECK(nlohmann::json::parse(slurp(ws.path("e.fasta.json")))["mean_nfe"] == 1.0);
  CHECK(run({"sample", "--checkpoint", ws.path("flow.ckpt"), "--out", ws.path("x.fasta"), "--steps", "0"}).code == 1);
  CHECK(run({"sample", "--checkpoint", ws.path("flow.ckpt"), "--out", ws.path("x.fasta"), "--method", "rk4"}).code == 1);
  CHECK(run({"sample", "--checkpoint", ws.path("flow.ckpt"), "--out", ws.path("x.fasta"), "--n", "0"}).code == 1);
}

TEST_CASE("eval identity and thresholds") {
  Workspace ws;
  spit(ws.path("scores.csv"), "sequence_id,score\ns0,0.9\ns1,0.7\ns2,0.8\ns3,0.95\n");
  const Run r = run({"eval", "--gen", ws.path("val.fasta"), "--ref", ws.path("val.fasta"), "--out", ws.path("rep"),
                     "--external-scores", ws.path("scores.csv"), "--thresholds", "0.8,0.5"});
  REQUIRE(r.code == 0);
  const nlohmann::json rep = nlohmann::json::parse(slurp(ws.path("rep.json")));
  std::map<std::string, nlohmann::json> m;
  for (const auto& row : rep["metrics"]) {
    m[row["metric"]] = row["value"];
    CHECK(row["n_gen"] == 20);
    CHECK(row["config_hash"] == rep["config_hash"]);
  }
  CHECK(m["kmer_jaccard_6"] == 1.0);
  // 20 embeddings in 64 dimensions give rank-deficient covariances; the
  // square root of the round-off in their null space bounds the accuracy.
  CHECK(std::abs(m["frechet_distance"].get<double>()) < 1e-6);
  CHECK(std::abs(m["mmd_rbf"].get<double>()) < 1e-12);
  CHECK(m["ot_levenshtein"] == 0.0);
  CHECK(m["w_property"] == 0.0);
  CHECK(m["entropy_gen"] == m["entropy_ref"]);
  CHECK(m["proportion_above_0.8"] == 0.5);
  CHECK(m["proportion_above_0.5"] == 1.0);
  const std::string csv = slurp(ws.path("rep.csv"));
  CHECK(csv.rfind("metric,value,n_gen,n_ref,config_hash,seed\n", 0) == 0);

  // Unequal sizes skip the paired metrics with a reason.
  REQUIRE(run({"eval", "--gen", ws.path("val.fasta"), "--ref", ws.path("train.fasta"), "--out", ws.path("rep2")}).code == 0);
  const nlohmann::json rep2 = nlohmann::json::parse(slurp(ws.path("rep2.json")));
  for (const auto& row : rep2["metrics"]) {
    if (row["metric"] == "mmd_rbf" || row["metric"] == "ot_levenshtein" || row["metric"] == "threshold_proportion") {
      CHECK(row["value"].get<std::string>().rfind("skipped: ", 0) == 0);
    }
  }
  spit(ws.path("badscores.csv"), "a,b\nx,notanumber\n");
  CHECK(run({"eval", "--gen", ws.path("val.fasta"), "--ref", ws.path("val.fasta"), "--out", ws.path("rep3"),
             "--external-scores", ws.path("badscores.csv"), "--thresholds", "0.5"}).code == 2);
}

TEST_CASE("multichain pipeline") {
  Workspace ws;
  spit(ws.path("h.fasta"), corpus_fasta(3, 60, 6));
  spit(ws.path("l.fasta"), corpus_fasta(4, 60, 5));
  spit(ws.path("mc.cfg"),
       slurp(ws.cfg) + "chains.names = heavy,light\nchain.heavy.L_max = 6\nchain.light.L_max = 5\n"
       "chain.heavy.train_path = " + ws.path("h.fasta") + "\nchain.light.train_path = " + ws.path("l.fasta") + "\n");
  REQUIRE(run({"train-decoder", "--config", ws.path("mc.cfg"), "--out", ws.path("mdec.ckpt")}).code == 0);
  CHECK(fs::exists(ws.path("mdec.ckpt.heavy.loss.csv")));
  REQUIRE(run({"train-compressor", "--in", ws.path("mdec.ckpt"), "--out", ws.path("mcomp.ckpt")}).code == 0);
  REQUIRE(run({"train-flow", "--in", ws.path("mcomp.ckpt"), "--out", ws.path("mflow.ckpt")}).code == 0);
  REQUIRE(run({"sample", "--checkpoint", ws.path("mflow.ckpt"), "--out", ws.path("m.fasta"), "--n", "4"}).code == 0);
  const auto recs = read_fasta_file(ws.path("m.fasta"));
  REQUIRE(recs.size() == 8);
  CHECK(recs[0].header == "gen_0|chain=heavy");
  CHECK(recs[1].header == "gen_0|chain=light");
  CHECK(recs[1].sequence.size() <= 5);
}

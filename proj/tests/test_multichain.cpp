#include "doctest.h"
#include "protflow/error.hpp"
#include "protflow/multichain.hpp"

using namespace protflow;

namespace {

std::shared_ptr<const LatentPipeline> toy_pipeline(Rng& rng, std::size_t dim, std::size_t ratio, std::size_t max_length) {
  auto p = std::make_shared<LatentPipeline>();
  p->encoder = Encoder(dim, max_length, rng);
  p->decoder = Decoder(dim, rng);
  std::vector<Matrix> emb;
  for (int i = 0; i < 8; ++i) emb.push_back(gaussian(rng, max_length, dim));
  p->stats = fit_smoothing(emb);
  p->compressor = Compressor(dim, ratio, max_length, rng);
  return p;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::kInvalidArgument;
}

}  // namespace

TEST_CASE("heavy and light chains stack into one latent") {
  const ChainLayout layout({{"heavy", 149, 4, nullptr}, {"light", 148, 4, nullptr}});
  Rng rng(1);
  const Matrix h = gaussian(rng, 149, 4), l = gaussian(rng, 148, 4);
  const Matrix joint = concat_latents({h, l}, layout);
  CHECK(joint.rows() == 297);
  CHECK(joint.cols() == 4);
  CHECK(layout.total_length() == 297);
  CHECK(layout.offset(1) == 149);
  CHECK(slice_rows(joint, 0, 149) == h);
  CHECK(slice_rows(joint, 149, 148) == l);
}

TEST_CASE("single chain layout is the identity") {
  const ChainLayout layout({{"a", 5, 3, nullptr}});
  Rng rng(2);
  const Matrix m = gaussian(rng, 5, 3);
  CHECK(concat_latents({m}, layout) == m);
  CHECK(split_latents(m, layout).front() == m);
}

TEST_CASE("split inverts concat for random layouts") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t w = 1 + rng.uniform_int(5);
    std::vector<ChainSpec> specs;
    std::vector<Matrix> parts;
    for (int c = 0; c < 3; ++c) {
      const std::size_t len = 1 + rng.uniform_int(10);
      specs.push_back({"c" + std::to_string(c), len, w, nullptr});
      parts.push_back(gaussian(rng, len, w));
    }
    const ChainLayout layout(specs);
    const std::vector<Matrix> back = split_latents(concat_latents(parts, layout), layout);
    REQUIRE(back.size() == 3);
    for (int c = 0; c < 3; ++c) CHECK(back[c] == parts[c]);
  }
}

TEST_CASE("layout validation") {
  CHECK(code_of([] { ChainLayout({{"a", 3, 4, nullptr}, {"b", 3, 2, nullptr}}); }) == Errc::kWidthMismatch);
  CHECK(code_of([] { ChainLayout({{"a", 3, 4, nullptr}, {"a", 3, 4, nullptr}}); }) == Errc::kInvalidArgument);
  CHECK(code_of([] { ChainLayout({{"a", 0, 4, nullptr}}); }) == Errc::kInvalidArgument);
  CHECK(code_of([] { ChainLayout(std::vector<ChainSpec>{}); }) == Errc::kInvalidArgument);
  Rng rng(4);
  auto p = toy_pipeline(rng, 8, 2, 5);
  CHECK_NOTHROW(ChainLayout({{"a", 5, 4, p}}));
  CHECK(code_of([&] { ChainLayout({{"a", 4, 4, p}}); }) == Errc::kShapeMismatch);
  CHECK(code_of([&] { ChainLayout({{"a", 5, 2, p}}); }) == Errc::kShapeMismatch);
}

TEST_CASE("concat and split shape errors") {
  const ChainLayout layout({{"a", 2, 3, nullptr}, {"b", 4, 3, nullptr}});
  Rng rng(5);
  CHECK(code_of([&] { concat_latents({gaussian(rng, 2, 3)}, layout); }) == Errc::kLayoutMismatch);
  CHECK(code_of([&] { concat_latents({gaussian(rng, 2, 3), gaussian(rng, 3, 3)}, layout); }) == Errc::kLayoutMismatch);
  CHECK(code_of([&] { concat_latents({gaussian(rng, 2, 3), gaussian(rng, 4, 2)}, layout); }) == Errc::kWidthMismatch);
  CHECK(code_of([&] { split_latents(gaussian(rng, 5, 3), layout); }) == Errc::kLayoutMismatch);
  CHECK(code_of([&] { split_latents(gaussian(rng, 6, 2), layout); }) == Errc::kWidthMismatch);
}

TEST_CASE("joint latent matches per-chain latents") {
  Rng rng(6);
  auto pa = toy_pipeline(rng, 8, 2, 5);
  auto pb = toy_pipeline(rng, 8, 2, 3);
  const ChainLayout layout({{"a", 5, 4, pa}, {"b", 3, 4, pb}});
  const Matrix joint = joint_latent({"ACD", "WY"}, layout);
  CHECK(slice_rows(joint, 0, 5) == pa->to_latent(pad_to(tokenize("ACD"), 5)));
  CHECK(slice_rows(joint, 5, 3) == pb->to_latent(pad_to(tokenize("WY"), 3)));
  CHECK_THROWS(joint_latent({"ACD"}, layout));
  CHECK_THROWS_AS(joint_latent({"ACD", "WYWY"}, layout), SequenceTooLong);
}

TEST_CASE("multichain sampling shapes, headers and determinism") {
  Rng rng(7);
  auto pa = toy_pipeline(rng, 8, 4, 4);
  auto pb = toy_pipeline(rng, 8, 4, 3);
  const ChainLayout layout({{"heavy", 4, 2, pa}, {"light", 3, 2, pb}});
  VectorFieldConfig cfg;
  cfg.latent_width = 2;
  cfg.width = 8;
  cfg.depth = 2;
  cfg.seq_len = 7;
  cfg.attention = true;
  const VectorField model(cfg, rng);
  SolverConfig solver;
  solver.method = SolverMethod::kEuler;
  solver.steps = 2;
  const Rng stream(8);

  const auto latents = sample_joint_latents(model, layout, 3, solver, stream);
  REQUIRE(latents.size() == 3);
  CHECK(latents[0][0].rows() == 4);
  CHECK(latents[0][1].rows() == 3);

  const std::vector<LengthDistribution> lengths{LengthDistribution(std::map<std::size_t, std::uint64_t>{{4, 1}}),
                                                LengthDistribution(std::map<std::size_t, std::uint64_t>{{1, 1}, {3, 1}})};
  const MultichainBatch a = sample_multichain(model, layout, lengths, 10, solver, stream);
  const MultichainBatch b = sample_multichain(model, layout, lengths, 10, solver, stream);
  REQUIRE(a.samples.size() == 10);
  CHECK(a.samples == b.samples);
  CHECK(a.mean_nfe == 2.0);
  for (const auto& s : a.samples) {
    REQUIRE(s.size() == 2);
    CHECK(s[0].size() == 4);
    CHECK((s[1].size() == 1 || s[1].size() == 3));
  }
  const std::vector<FastaRecord> recs = multichain_records(a, layout);
  REQUIRE(recs.size() == 20);
  CHECK(recs[0].header == "gen_0|chain=heavy");
  CHECK(recs[3].header == "gen_1|chain=light");
  CHECK(recs[3].sequence == a.samples[1][1]);

  CHECK_THROWS(sample_multichain(model, layout, lengths, 0, solver, stream));
  CHECK_THROWS(sample_multichain(model, layout, {lengths[0]}, 1, solver, stream));
  cfg.seq_len = 6;
  const VectorField wrong(cfg, rng);
  CHECK_THROWS(sample_joint_latents(wrong, layout, 1, solver, stream));
}

#include "protflow/multichain.hpp"

#include <set>

#include "protflow/error.hpp"

namespace protflow {

ChainLayout::ChainLayout(std::vector<ChainSpec> chains) : chains_(std::move(chains)) {
  if (chains_.empty()) throw Error(Errc::kInvalidArgument, "chain layout is empty");
  std::set<std::string> names;
  for (const auto& c : chains_) {
    if (c.name.empty() || !names.insert(c.name).second) {
      throw Error(Errc::kInvalidArgument, "chain names must be unique and nonempty: '" + c.name + "'");
    }
    if (c.max_length == 0 || c.width == 0) {
      throw Error(Errc::kInvalidArgument, "chain '" + c.name + "' needs positive length and width");
    }
    if (c.width != chains_.front().width) {
      throw Error(Errc::kWidthMismatch, "chain '" + c.name + "' has width " + std::to_string(c.width) +
                                            ", expected " + std::to_string(chains_.front().width));
    }
    if (c.pipeline && (c.pipeline->max_length() != c.max_length || c.pipeline->latent_width() != c.width)) {
      throw Error(Errc::kShapeMismatch, "chain '" + c.name + "' pipeline does not match its layout entry");
    }
    offsets_.push_back(total_);
    total_ += c.max_length;
  }
}

Matrix concat_latents(const std::vector<Matrix>& per_chain, const ChainLayout& layout) {
  if (per_chain.size() != layout.size()) {
    throw Error(Errc::kLayoutMismatch, std::to_string(per_chain.size()) + " latents for " +
                                           std::to_string(layout.size()) + " chains");
  }
  for (std::size_t i = 0; i < per_chain.size(); ++i) {
    if (per_chain[i].cols() != layout.width()) {
      throw Error(Errc::kWidthMismatch, "chain '" + layout.chains()[i].name + "' latent width " +
                                            std::to_string(per_chain[i].cols()) + ", expected " +
                                            std::to_string(layout.width()));
    }
    if (per_chain[i].rows() != layout.chains()[i].max_length) {
      throw Error(Errc::kLayoutMismatch, "chain '" + layout.chains()[i].name + "' latent has " +
                                             std::to_string(per_chain[i].rows()) + " rows, expected " +
                                             std::to_string(layout.chains()[i].max_length));
    }
  }
  Matrix joint(layout.total_length(), layout.width());
  for (std::size_t i = 0; i < per_chain.size(); ++i) {
    std::copy_n(per_chain[i].data(), per_chain[i].size(), joint.row(layout.offset(i)).data());
  }
  return joint;
}

std::vector<Matrix> split_latents(const Matrix& joint, const ChainLayout& layout) {
  if (joint.cols() != layout.width()) {
    throw Error(Errc::kWidthMismatch, "joint latent width " + std::to_string(joint.cols()) +
                                          " does not match layout width " + std::to_string(layout.width()));
  }
  if (joint.rows() != layout.total_length()) {
    throw Error(Errc::kLayoutMismatch, "joint latent " + std::to_string(joint.rows()) + "x" +
                                           std::to_string(joint.cols()) + " does not match layout " +
                                           std::to_string(layout.total_length()) + "x" +
                                           std::to_string(layout.width()));
  }
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    out.push_back(slice_rows(joint, layout.offset(i), layout.chains()[i].max_length));
  }
  return out;
}

namespace {

const LatentPipeline& pipeline_of(const ChainSpec& c) {
  if (!c.pipeline) throw Error(Errc::kInvalidArgument, "chain '" + c.name + "' has no latent pipeline");
  return *c.pipeline;
}

}  // namespace

Matrix joint_latent(const std::vector<std::string>& chains, const ChainLayout& layout) {
  if (chains.size() != layout.size()) {
    throw Error(Errc::kLayoutMismatch, std::to_string(chains.size()) + " chains for a layout of " +
                                           std::to_string(layout.size()));
  }
  std::vector<Matrix> parts;
  for (std::size_t i = 0; i < chains.size(); ++i) {
    const ChainSpec& c = layout.chains()[i];
    parts.push_back(pipeline_of(c).to_latent(pad_to(tokenize(chains[i]), c.max_length)));
  }
  return concat_latents(parts, layout);
}

namespace {

void check_model(const VectorField& model, const ChainLayout& layout) {
  if (model.config().seq_len != layout.total_length() || model.config().latent_width != layout.width()) {
    throw Error(Errc::kLayoutMismatch, "vector field shape does not match the chain layout");
  }
}

}  // namespace

std::vector<std::vector<Matrix>> sample_joint_latents(const VectorField& model, const ChainLayout& layout,
                                                      std::size_t n, const SolverConfig& config,
                                                      const Rng& rng) {
  check_model(model, layout);
  std::vector<Matrix> starts;
  for (std::size_t i = 0; i < n; ++i) starts.push_back(sample_noise(rng, i, layout.total_length(), layout.width()));
  BatchSolve solved = solve_each(model, starts, config);
  std::vector<std::vector<Matrix>> out;
  for (auto& e : solved.endpoints) out.push_back(split_latents(e, layout));
  return out;
}

MultichainBatch sample_multichain(const VectorField& model, const ChainLayout& layout,
                                  const std::vector<LengthDistribution>& lengths, std::size_t n,
                                  const SolverConfig& config, const Rng& rng) {
  check_model(model, layout);
  if (n == 0) throw Error(Errc::kInvalidArgument, "sample_multichain needs n >= 1");
  if (lengths.size() != layout.size()) {
    throw Error(Errc::kLayoutMismatch, "need one length distribution per chain");
  }
  for (std::size_t c = 0; c < layout.size(); ++c) {
    pipeline_of(layout.chains()[c]);
    if (lengths[c].total() == 0) throw Error(Errc::kEmptyCorpus, "empty length distribution");
    if (lengths[c].max_length() > layout.chains()[c].max_length) {
      throw SequenceTooLong(lengths[c].max_length(), layout.chains()[c].max_length);
    }
  }
  std::vector<Matrix> starts;
  for (std::size_t i = 0; i < n; ++i) starts.push_back(sample_noise(rng, i, layout.total_length(), layout.width()));
  BatchSolve solved = solve_each(model, starts, config);

  MultichainBatch out;
  out.nfe = solved.nfe;
  double nfe_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<Matrix> parts = split_latents(solved.endpoints[i], layout);
    std::vector<std::string> seqs;
    for (std::size_t c = 0; c < layout.size(); ++c) {
      const ChainSpec& spec = layout.chains()[c];
      Rng lr = rng.split(i).split("length").split(spec.name);
      const std::size_t length = sample_length(lengths[c], lr);
      seqs.push_back(detokenize(spec.pipeline->from_latent(parts[c], prefix_mask(length, spec.max_length))));
    }
    out.samples.push_back(std::move(seqs));
    nfe_sum += static_cast<double>(solved.nfe[i]);
  }
  out.mean_nfe = n ? nfe_sum / static_cast<double>(n) : 0.0;
  return out;
}

std::vector<FastaRecord> multichain_records(const MultichainBatch& batch, const ChainLayout& layout) {
  std::vector<FastaRecord> out;
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    for (std::size_t c = 0; c < layout.size(); ++c) {
      out.push_back({"gen_" + std::to_string(i) + "|chain=" + layout.chains()[c].name, batch.samples[i][c]});
    }
  }
  return out;
}

}  // namespace protflow

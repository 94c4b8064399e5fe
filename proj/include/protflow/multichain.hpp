#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "protflow/flow.hpp"
#include "protflow/latent.hpp"
#include "protflow/ode.hpp"
#include "protflow/seqio.hpp"

namespace protflow {

struct ChainSpec {
  std::string name;
  std::size_t max_length = 0;
  std::size_t width = 0;  // D / c of this chain's latent
  std::shared_ptr<const LatentPipeline> pipeline;  // optional for latent-only use
};

/// Ordered chains whose latents are stacked along the row axis.
class ChainLayout {
 public:
  ChainLayout() = default;
  /// Throws InvalidArgument on duplicate names or zero lengths, WidthMismatch
  /// on differing widths, ShapeMismatch if a pipeline disagrees with its spec.
  explicit ChainLayout(std::vector<ChainSpec> chains);

  const std::vector<ChainSpec>& chains() const noexcept { return chains_; }
  std::size_t size() const noexcept { return chains_.size(); }
  std::size_t total_length() const noexcept { return total_; }
  std::size_t width() const noexcept { return chains_.empty() ? 0 : chains_.front().width; }
  /// First row of chain i in the joint latent.
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }

 private:
  std::vector<ChainSpec> chains_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

/// Row-wise concatenation in layout order.
Matrix concat_latents(const std::vector<Matrix>& per_chain, const ChainLayout& layout);
/// Exact inverse of concat_latents.
std::vector<Matrix> split_latents(const Matrix& joint, const ChainLayout& layout);

/// Joint latent of one multichain example; every chain needs a pipeline.
Matrix joint_latent(const std::vector<std::string>& chains, const ChainLayout& layout);

/// One joint solve per sample from rng.split(i), split back per chain.
std::vector<std::vector<Matrix>> sample_joint_latents(const VectorField& model, const ChainLayout& layout,
                                                      std::size_t n, const SolverConfig& config,
                                                      const Rng& rng);

struct MultichainBatch {
  std::vector<std::vector<std::string>> samples;  // samples[i][chain]
  std::vector<std::size_t> nfe;
  double mean_nfe = 0.0;
};

/// Chain lengths are drawn independently from `lengths[chain]`; each chain
/// decodes with its own pipeline.
MultichainBatch sample_multichain(const VectorField& model, const ChainLayout& layout,
                                  const std::vector<LengthDistribution>& lengths, std::size_t n,
                                  const SolverConfig& config, const Rng& rng);

/// Consecutive records per sample, headers "gen_<i>|chain=<name>".
std::vector<FastaRecord> multichain_records(const MultichainBatch& batch, const ChainLayout& layout);

}  // namespace protflow

#pragma once

#include "psar/common.hpp"

#include <iosfwd>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace psar {

using Edge = std::pair<Index, Index>;

/// Directed 0/1 adjacency without self-loops, stored as sorted out-neighbour lists.
class Adjacency {
 public:
  Adjacency() = default;
  /// rows[i] holds the out-neighbours of node i, in any order.
  Adjacency(Index n, std::vector<std::vector<Index>> rows);

  static Adjacency from_edges(Index n, std::span<const Edge> edges);

  Index size() const noexcept { return n_; }
  Index num_edges() const noexcept { return static_cast<Index>(targets_.size()); }
  std::span<const Index> neighbors(Index i) const;
  Index out_degree(Index i) const { return offsets_[i + 1] - offsets_[i]; }
  std::vector<Index> in_degrees() const;
  bool has_edge(Index i, Index j) const;
  std::vector<Edge> edges() const;
  /// Edge count over N(N-1).
  double density() const;

  friend bool operator==(const Adjacency&, const Adjacency&) = default;

 private:
  Index n_ = 0;
  std::vector<Index> offsets_{0};
  std::vector<Index> targets_;
};

struct DropResult {
  Adjacency adjacency;
  std::vector<Index> kept;  // original id of each surviving node
  Index dropped = 0;
};

/// Removes nodes with no out-edges, repeating until none remain, and re-indexes.
DropResult drop_zero_out_degree(const Adjacency& a);

/// Row-stochastic W with w_ij = a_ij / d_i. Cheap to copy; storage is shared and immutable.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  /// Takes an already normalized matrix; checks zero diagonal, nonnegativity and unit row sums.
  explicit WeightMatrix(SpMat w);

  Index size() const noexcept { return s_ ? s_->w.rows() : 0; }
  Index nonzeros() const noexcept { return s_ ? s_->w.nonZeros() : 0; }
  const SpMat& matrix() const { return s_->w; }
  const SpMat& transpose() const { return s_->wt; }
  /// c_i = sum_k w_ki^2.
  const Vector& col_sq() const { return s_->col_sq; }
  double frobenius_sq() const { return s_->col_sq.sum(); }
  Matrix dense() const { return Matrix(s_->w); }

 private:
  struct Storage {
    SpMat w;
    SpMat wt;
    Vector col_sq;
  };
  std::shared_ptr<const Storage> s_;
};

WeightMatrix row_normalize(const Adjacency& a);

/// Independent dyads: P(mutual) = 10/n, P(one-way) = 0.5 n^-0.8 in each direction.
Adjacency gen_dyad(Index n, std::uint64_t seed);

/// Directed edges with probability 20/n inside a block and 2/n across blocks.
/// Block labels are written to `labels` when it is non-null.
Adjacency gen_sbm(Index n, Index k_blocks, std::uint64_t seed, std::vector<Index>* labels = nullptr);

/// Each node i draws m_i from P(m = k) proportional to k^-alpha on 1..n-1 and
/// receives edges j -> i from m_i distinct followers j.
Adjacency gen_powerlaw(Index n, double alpha, std::uint64_t seed);

/// sum_k k * p_k for the truncated law used by gen_powerlaw.
double powerlaw_mean(Index n, double alpha);

enum class Generator { Dyad, Sbm, PowerLaw };
Generator parse_generator(std::string_view name);
const char* to_string(Generator g) noexcept;

struct GeneratorOptions {
  Index sbm_blocks = 20;
  double powerlaw_alpha = 3.0;
};

/// Generates a network and drops zero-out-degree nodes.
DropResult generate_network(Generator g, Index n, std::uint64_t seed, const GeneratorOptions& opts = {});

void write_edge_list(std::ostream& out, const Adjacency& a);
/// Reads `src,dst` lines. Node count is `n` when given, otherwise max id + 1.
Adjacency read_edge_list(std::istream& in, std::optional<Index> n = std::nullopt);

}  // namespace psar

#include "psar/network.hpp"
#include "psar/rng.hpp"

#include <boost/random/discrete_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

namespace psar {

Adjacency::Adjacency(Index n, std::vector<std::vector<Index>> rows) : n_(n) {
  if (n < 0 || static_cast<Index>(rows.size()) != n) {
    throw Error(ErrorKind::InvalidArgument, "adjacency row count does not match n");
  }
  offsets_.assign(1, 0);
  offsets_.reserve(n + 1);
  for (Index i = 0; i < n; ++i) {
    auto& row = rows[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    for (Index j : row) {
      if (j < 0 || j >= n) throw Error(ErrorKind::InvalidArgument, "edge target out of range");
      if (j == i) throw Error(ErrorKind::InvalidArgument, "self-loop at node " + std::to_string(i));
    }
    targets_.insert(targets_.end(), row.begin(), row.end());
    offsets_.push_back(static_cast<Index>(targets_.size()));
  }
}

Adjacency Adjacency::from_edges(Index n, std::span<const Edge> edges) {
  std::vector<std::vector<Index>> rows(n);
  for (const auto& [i, j] : edges) {
    if (i < 0 || i >= n) throw Error(ErrorKind::InvalidArgument, "edge source out of range");
    rows[i].push_back(j);
  }
  return Adjacency(n, std::move(rows));
}

std::span<const Index> Adjacency::neighbors(Index i) const {
  return {targets_.data() + offsets_[i], static_cast<std::size_t>(out_degree(i))};
}

std::vector<Index> Adjacency::in_degrees() const {
  std::vector<Index> deg(n_, 0);
  for (Index j : targets_) ++deg[j];
  return deg;
}

bool Adjacency::has_edge(Index i, Index j) const {
  auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::vector<Edge> Adjacency::edges() const {
  std::vector<Edge> out;
  out.reserve(targets_.size());
  for (Index i = 0; i < n_; ++i) {
    for (Index j : neighbors(i)) out.emplace_back(i, j);
  }
  return out;
}

double Adjacency::density() const {
  if (n_ < 2) return 0.0;
  return static_cast<double>(num_edges()) / (static_cast<double>(n_) * static_cast<double>(n_ - 1));
}

DropResult drop_zero_out_degree(const Adjacency& a) {
  const Index n = a.size();
  std::vector<char> alive(n, 1);
  std::vector<Index> live_degree(n);
  for (Index i = 0; i < n; ++i) live_degree[i] = a.out_degree(i);

  // Removing a node can empty the rows of nodes that only pointed at it.
  std::vector<std::vector<Index>> in_lists(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j : a.neighbors(i)) in_lists[j].push_back(i);
  }
  std::vector<Index> queue;
  for (Index i = 0; i < n; ++i) {
    if (live_degree[i] == 0) queue.push_back(i);
  }
  while (!queue.empty()) {
    const Index v = queue.back();
    queue.pop_back();
    if (!alive[v]) continue;
    alive[v] = 0;
    for (Index u : in_lists[v]) {
      if (alive[u] && --live_degree[u] == 0) queue.push_back(u);
    }
  }

  DropResult out;
  std::vector<Index> new_id(n, -1);
  for (Index i = 0; i < n; ++i) {
    if (alive[i]) {
      new_id[i] = static_cast<Index>(out.kept.size());
      out.kept.push_back(i);
    }
  }
  const Index m = static_cast<Index>(out.kept.size());
  out.dropped = n - m;
  std::vector<std::vector<Index>> rows(m);
  for (Index k = 0; k < m; ++k) {
    for (Index j : a.neighbors(out.kept[k])) {
      if (alive[j]) rows[k].push_back(new_id[j]);
    }
  }
  out.adjacency = Adjacency(m, std::move(rows));
  return out;
}

WeightMatrix::WeightMatrix(SpMat w) {
  if (w.rows() != w.cols()) throw Error(ErrorKind::InvalidArgument, "weight matrix must be square");
  w.makeCompressed();
  const Index n = w.rows();
  Vector row_sum = Vector::Zero(n);
  Vector col_sq = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    for (SpMat::InnerIterator it(w, j); it; ++it) {
      if (it.row() == j && it.value() != 0.0) {
        throw Error(ErrorKind::InvalidArgument, "weight matrix has a nonzero diagonal");
      }
      if (it.value() < 0.0) throw Error(ErrorKind::InvalidArgument, "negative weight");
      row_sum[it.row()] += it.value();
      col_sq[j] += it.value() * it.value();
    }
  }
  for (Index i = 0; i < n; ++i) {
    if (row_sum[i] == 0.0) throw Error(ErrorKind::ZeroOutDegree, "row " + std::to_string(i), i);
    if (std::abs(row_sum[i] - 1.0) > 1e-12) {
      throw Error(ErrorKind::InvalidArgument, "row " + std::to_string(i) + " does not sum to 1");
    }
  }
  auto s = std::make_shared<Storage>();
  s->wt = w.transpose();
  s->wt.makeCompressed();
  s->w = std::move(w);
  s->col_sq = std::move(col_sq);
  s_ = std::move(s);
}

WeightMatrix row_normalize(const Adjacency& a) {
  const Index n = a.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(a.num_edges());
  for (Index i = 0; i < n; ++i) {
    const Index d = a.out_degree(i);
    if (d == 0) throw Error(ErrorKind::ZeroOutDegree, "node " + std::to_string(i) + " has no out-edges", i);
    const double wt = 1.0 / static_cast<double>(d);
    for (Index j : a.neighbors(i)) trip.emplace_back(i, j, wt);
  }
  SpMat w(n, n);
  w.setFromTriplets(trip.begin(), trip.end());
  return WeightMatrix(std::move(w));
}

Adjacency gen_dyad(Index n, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "dyad generator needs n >= 2");
  const double nd = static_cast<double>(n);
  const double p_mutual = 10.0 / nd;
  const double p_one = 0.5 * std::pow(nd, -0.8);
  if (p_mutual + 2.0 * p_one > 1.0) {
    throw Error(ErrorKind::ProbabilityOverflow, "dyad probabilities exceed 1 for n = " + std::to_string(n));
  }
  Rng rng = make_rng(seed);
  boost::random::uniform_01<double> unif;
  std::vector<std::vector<Index>> rows(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double u = unif(rng);
      if (u < p_mutual) {
        rows[i].push_back(j);
        rows[j].push_back(i);
      } else if (u < p_mutual + p_one) {
        rows[i].push_back(j);
      } else if (u < p_mutual + 2.0 * p_one) {
        rows[j].push_back(i);
      }
    }
  }
  return Adjacency(n, std::move(rows));
}

Adjacency gen_sbm(Index n, Index k_blocks, std::uint64_t seed, std::vector<Index>* labels) {
  if (k_blocks < 1) throw Error(ErrorKind::InvalidArgument, "need at least one block");
  const double nd = static_cast<double>(n);
  const double p_in = 20.0 / nd;
  const double p_out = 2.0 / nd;
  if (p_in > 1.0) throw Error(ErrorKind::ProbabilityOverflow, "within-block probability 20/n exceeds 1");
  Rng rng = make_rng(seed);
  boost::random::uniform_int_distribution<Index> block(0, k_blocks - 1);
  std::vector<Index> lab(n);
  for (auto& l : lab) l = block(rng);
  boost::random::uniform_01<double> unif;
  std::vector<std::vector<Index>> rows(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double p = lab[i] == lab[j] ? p_in : p_out;
      if (unif(rng) < p) rows[i].push_back(j);
    }
  }
  if (labels) *labels = std::move(lab);
  return Adjacency(n, std::move(rows));
}

namespace {

std::vector<double> powerlaw_weights(Index n, double alpha) {
  std::vector<double> wts(n - 1);
  for (Index k = 1; k < n; ++k) wts[k - 1] = std::pow(static_cast<double>(k), -alpha);
  return wts;
}

}  // namespace

double powerlaw_mean(Index n, double alpha) {
  const auto wts = powerlaw_weights(n, alpha);
  double total = 0.0;
  double first = 0.0;
  for (std::size_t k = 0; k < wts.size(); ++k) {
    total += wts[k];
    first += static_cast<double>(k + 1) * wts[k];
  }
  return first / total;
}

Adjacency gen_powerlaw(Index n, double alpha, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "power-law generator needs n >= 2");
  if (!(alpha > 2.0)) throw Error(ErrorKind::InvalidArgument, "power-law exponent must exceed 2");
  const auto wts = powerlaw_weights(n, alpha);
  boost::random::discrete_distribution<Index, double> degree(wts.begin(), wts.end());
  Rng rng = make_rng(seed);
  std::vector<std::vector<Index>> rows(n);
  std::set<Index> picked;
  for (Index i = 0; i < n; ++i) {
    const Index m = degree(rng) + 1;
    // Floyd's sampling of m distinct followers out of the n-1 other nodes.
    picked.clear();
    for (Index t = n - 1 - m; t < n - 1; ++t) {
      boost::random::uniform_int_distribution<Index> pick(0, t);
      const Index v = pick(rng);
      picked.insert(picked.count(v) ? t : v);
    }
    for (Index v : picked) {
      const Index follower = v < i ? v : v + 1;
      rows[follower].push_back(i);
    }
  }
  return Adjacency(n, std::move(rows));
}

Generator parse_generator(std::string_view name) {
  if (name == "dyad") return Generator::Dyad;
  if (name == "sbm") return Generator::Sbm;
  if (name == "powerlaw") return Generator::PowerLaw;
  throw Error(ErrorKind::UnknownSpec, "generator '" + std::string(name) + "'");
}

const char* to_string(Generator g) noexcept {
  switch (g) {
    case Generator::Dyad: return "dyad";
    case Generator::Sbm: return "sbm";
    case Generator::PowerLaw: return "powerlaw";
  }
  return "?";
}

DropResult generate_network(Generator g, Index n, std::uint64_t seed, const GeneratorOptions& opts) {
  switch (g) {
    case Generator::Dyad: return drop_zero_out_degree(gen_dyad(n, seed));
    case Generator::Sbm: return drop_zero_out_degree(gen_sbm(n, opts.sbm_blocks, seed));
    case Generator::PowerLaw: return drop_zero_out_degree(gen_powerlaw(n, opts.powerlaw_alpha, seed));
  }
  throw Error(ErrorKind::UnknownSpec, "generator");
}

void write_edge_list(std::ostream& out, const Adjacency& a) {
  out << "src,dst\n";
  for (Index i = 0; i < a.size(); ++i) {
    for (Index j : a.neighbors(i)) out << i << ',' << j << '\n';
  }
}

Adjacency read_edge_list(std::istream& in, std::optional<Index> n) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::IoError, "empty edge list");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "src,dst") throw Error(ErrorKind::IoError, "edge list header must be 'src,dst'");
  std::vector<Edge> edges;
  Index max_id = -1;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    Index i = 0;
    Index j = 0;
    char comma = 0;
    if (!(ls >> i >> comma >> j) || comma != ',' || i < 0 || j < 0) {
      throw Error(ErrorKind::IoError, "bad edge on line " + std::to_string(line_no));
    }
    edges.emplace_back(i, j);
    max_id = std::max({max_id, i, j});
  }
  const Index count = n.value_or(max_id + 1);
  if (max_id >= count) throw Error(ErrorKind::IoError, "edge list refers to node beyond n");
  return Adjacency::from_edges(count, edges);
}

}  // namespace psar

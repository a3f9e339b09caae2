#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "subag/criterion.hpp"
#include "subag/data.hpp"
#include "subag/error.hpp"
#include "subag/format.hpp"

namespace subag {

/// Either every leaf holds between h and 2h-1 rows, or the tree has exactly
/// N best-first splits.
class StoppingRule {
 public:
  enum class Kind { min_cell_size, exact_splits };

  static StoppingRule min_cell_size(std::size_t h) {
    require(h >= 1, "minimum cell size must be at least 1");
    return StoppingRule(Kind::min_cell_size, h);
  }
  static StoppingRule exact_splits(std::size_t n_splits) { return StoppingRule(Kind::exact_splits, n_splits); }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] std::size_t value() const noexcept { return value_; }
  [[nodiscard]] std::string describe() const {
    return (kind_ == Kind::min_cell_size ? "min-cell:" : "splits:") + std::to_string(value_);
  }

  friend bool operator==(const StoppingRule&, const StoppingRule&) = default;

 private:
  StoppingRule(Kind kind, std::size_t value) : kind_(kind), value_(value) {}
  Kind kind_;
  std::size_t value_;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Leaf geometry as seen from a query point.
struct CellInfo {
  std::vector<Interval> bounds;
  std::size_t member_count = 0;
  double diameter = 0.0;
};

/// Per-observation weights over the rows of the dataset a tree was grown from.
using WeightVector = std::vector<double>;

inline constexpr std::size_t no_limit = std::numeric_limits<std::size_t>::max();

/// Binary partition of [0,1]^p stored as a flat node array (root at 0).
///
/// Member rows of every node occupy a contiguous range of `rows_`, so internal
/// nodes double as the leaves of truncated trees: a tree grown best-first to N
/// splits contains every smaller tree of the same growth sequence, and
/// `max_splits` selects one of them.
class Tree {
 public:
  struct Node {
    Split split;
    std::int64_t left = -1;
    std::int64_t right = -1;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t count = 0;
    double mean = 0.0;
    /// Position of this node's split in the growth sequence; no_limit for leaves.
    std::size_t split_order = no_limit;

    [[nodiscard]] bool is_leaf() const noexcept { return left < 0; }
  };

  [[nodiscard]] std::span<const Node> nodes() const noexcept { return nodes_; }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t n_train() const noexcept { return n_train_; }
  [[nodiscard]] std::size_t n_source_rows() const noexcept { return n_source_; }
  [[nodiscard]] const StoppingRule& stopping() const noexcept { return stopping_; }
  [[nodiscard]] bool has_members() const noexcept { return !rows_.empty(); }

  [[nodiscard]] std::size_t n_splits() const noexcept {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(),
                                                  [](const Node& n) { return !n.is_leaf(); }));
  }
  [[nodiscard]] std::size_t n_leaves() const noexcept { return nodes_.size() - n_splits(); }

  /// Rows (with repetition, for bootstrap samples) belonging to a node.
  [[nodiscard]] std::span<const std::size_t> members(std::size_t node) const noexcept {
    return std::span<const std::size_t>(rows_).subspan(nodes_[node].begin, nodes_[node].end - nodes_[node].begin);
  }

  /// Node that acts as x0's leaf once only the first `max_splits` splits are kept.
  [[nodiscard]] std::size_t leaf_index(std::span<const double> x0, std::size_t max_splits = no_limit) const {
    require(x0.size() == dim_, "query point has the wrong dimension");
    std::size_t node = 0;
    while (!nodes_[node].is_leaf() && nodes_[node].split_order < max_splits) {
      const Node& n = nodes_[node];
      node = static_cast<std::size_t>(n.split.goes_left(x0) ? n.left : n.right);
    }
    return node;
  }

  [[nodiscard]] double predict(std::span<const double> x0, std::size_t max_splits = no_limit) const {
    return nodes_[leaf_index(x0, max_splits)].mean;
  }

  /// out[N] = prediction of the N-split truncation, for N = 0 .. out.size()-1.
  void predict_prefixes(std::span<const double> x0, std::span<double> out) const {
    require(x0.size() == dim_, "query point has the wrong dimension");
    std::size_t node = 0;
    for (std::size_t n_splits = 0; n_splits < out.size(); ++n_splits) {
      while (!nodes_[node].is_leaf() && nodes_[node].split_order < n_splits) {
        const Node& n = nodes_[node];
        node = static_cast<std::size_t>(n.split.goes_left(x0) ? n.left : n.right);
      }
      out[n_splits] = nodes_[node].mean;
    }
  }

  /// W_i(x0) = multiplicity of row i in x0's leaf / leaf size.
  [[nodiscard]] WeightVector weights(std::span<const double> x0, std::size_t max_splits = no_limit) const {
    WeightVector w(n_source_, 0.0);
    add_weights(x0, w, 1.0, max_splits);
    return w;
  }

  /// Accumulates scale * W(x0) into `w`.
  void add_weights(std::span<const double> x0, std::span<double> w, double scale,
                   std::size_t max_splits = no_limit) const {
    require(has_members(), "tree carries no member rows");
    const std::size_t leaf = leaf_index(x0, max_splits);
    const auto rows = members(leaf);
    const double share = scale / static_cast<double>(rows.size());
    for (std::size_t r : rows) w[r] += share;
  }

  [[nodiscard]] std::vector<Interval> bounds(std::size_t node) const {
    std::vector<Interval> box(dim_);
    // Walk down from the root along the splits that lead to `node`.
    std::vector<std::size_t> path;
    for (std::int64_t at = static_cast<std::int64_t>(node); at > 0; at = parent_[static_cast<std::size_t>(at)]) {
      path.push_back(static_cast<std::size_t>(at));
    }
    std::size_t current = 0;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      const Node& n = nodes_[current];
      Interval& side = box[n.split.feature];
      if (static_cast<std::size_t>(n.left) == *it) {
        side.hi = std::min(side.hi, n.split.threshold);
      } else {
        side.lo = std::max(side.lo, n.split.threshold);
      }
      current = *it;
    }
    return box;
  }

  [[nodiscard]] CellInfo cell_of(std::span<const double> x0, std::size_t max_splits = no_limit) const {
    const std::size_t leaf = leaf_index(x0, max_splits);
    CellInfo info{bounds(leaf), nodes_[leaf].count, 0.0};
    double sq = 0.0;
    for (const Interval& side : info.bounds) sq += (side.hi - side.lo) * (side.hi - side.lo);
    info.diameter = std::sqrt(sq);
    return info;
  }

  // Construction is handled by the growth routines and the text reader.
  struct Builder;

 private:
  std::vector<Node> nodes_;
  std::vector<std::int64_t> parent_;
  std::vector<std::size_t> rows_;
  std::size_t dim_ = 1;
  std::size_t n_train_ = 0;
  std::size_t n_source_ = 0;
  StoppingRule stopping_ = StoppingRule::exact_splits(0);
};

struct Tree::Builder {
  Tree tree;
  const Dataset* data = nullptr;

  void init(const Dataset& source, std::span<const std::size_t> rows, const StoppingRule& stopping) {
    data = &source;
    tree.rows_.assign(rows.begin(), rows.end());
    tree.dim_ = source.dim();
    tree.n_train_ = rows.size();
    tree.n_source_ = source.size();
    tree.stopping_ = stopping;
  }

  void init_parsed(std::size_t dim) { tree.dim_ = dim; }
  void finish_parsed(std::size_t train, const StoppingRule& stopping) {
    tree.n_train_ = train;
    tree.n_source_ = train;
    tree.stopping_ = stopping;
  }

  /// Appends a node read from the text format; children are linked by the caller.
  std::size_t add_parsed(const Node& node, std::int64_t parent) {
    tree.nodes_.push_back(node);
    tree.parent_.push_back(parent);
    return tree.nodes_.size() - 1;
  }
  Node& node(std::size_t index) { return tree.nodes_[index]; }

  std::size_t add_node(std::size_t begin, std::size_t end, std::int64_t parent) {
    Node node;
    node.begin = begin;
    node.end = end;
    node.count = end - begin;
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) sum += data->y(tree.rows_[i]);
    node.mean = node.count > 0 ? sum / static_cast<double>(node.count) : 0.0;
    tree.nodes_.push_back(node);
    tree.parent_.push_back(parent);
    return tree.nodes_.size() - 1;
  }

  /// Splits a leaf in place: left members first, order preserved on each side.
  void split_node(std::size_t node, const Split& split, std::size_t order) {
    auto first = tree.rows_.begin() + static_cast<std::ptrdiff_t>(tree.nodes_[node].begin);
    auto last = tree.rows_.begin() + static_cast<std::ptrdiff_t>(tree.nodes_[node].end);
    auto middle = std::stable_partition(first, last, [&](std::size_t r) { return split.goes_left(data->row(r)); });
    const auto mid = static_cast<std::size_t>(middle - tree.rows_.begin());
    const std::size_t begin = tree.nodes_[node].begin;
    const std::size_t end = tree.nodes_[node].end;
    const std::size_t left = add_node(begin, mid, static_cast<std::int64_t>(node));
    const std::size_t right = add_node(mid, end, static_cast<std::int64_t>(node));
    Node& parent = tree.nodes_[node];
    parent.split = split;
    parent.left = static_cast<std::int64_t>(left);
    parent.right = static_cast<std::int64_t>(right);
    parent.split_order = order;
  }
};

namespace detail {

inline Tree grow_min_cell_size(Tree::Builder& b, std::size_t h) {
  std::size_t order = 0;
  // Breadth-first so that split_order reflects depth.
  for (std::size_t node = 0; node < b.tree.nodes().size(); ++node) {
    const std::size_t count = b.tree.nodes()[node].count;
    if (count < 2 * h) continue;
    const auto choice = best_split(*b.data, b.tree.members(node), h);
    if (!choice) {
      throw GrowthError("cell with " + std::to_string(count) + " rows has no admissible split for minimum cell size " +
                        std::to_string(h));
    }
    b.split_node(node, choice->split, order++);
  }
  return std::move(b.tree);
}

inline Tree grow_exact_splits(Tree::Builder& b, std::size_t n_splits) {
  const double n_total = static_cast<double>(b.tree.n_train());
  struct Pending {
    std::size_t node;
    std::optional<ScoredSplit> choice;
    double score;  // criterion scaled by the cell's share of the sample
  };
  std::vector<Pending> frontier;
  auto push = [&](std::size_t node) {
    const auto rows = b.tree.members(node);
    auto choice = best_split(*b.data, rows, 1);
    const double score = choice ? choice->value * static_cast<double>(rows.size()) / n_total : 0.0;
    frontier.push_back({node, choice, score});
  };
  push(0);
  for (std::size_t done = 0; done < n_splits; ++done) {
    std::size_t pick = frontier.size();
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      if (!frontier[i].choice) continue;
      if (pick == frontier.size() || frontier[i].score > frontier[pick].score) pick = i;
    }
    if (pick == frontier.size()) {
      throw GrowthError("cannot reach " + std::to_string(n_splits) + " splits: only " + std::to_string(done) +
                        " possible on " + std::to_string(b.tree.n_train()) + " rows");
    }
    const Pending chosen = frontier[pick];
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
    b.split_node(chosen.node, chosen.choice->split, done);
    const auto& parent = b.tree.nodes()[chosen.node];
    const auto left = static_cast<std::size_t>(parent.left);
    const auto right = static_cast<std::size_t>(parent.right);
    // Children are appended in node order, so ties resolve to the older leaf.
    push(left);
    push(right);
    std::stable_sort(frontier.begin(), frontier.end(),
                     [](const Pending& a, const Pending& c) { return a.node < c.node; });
  }
  return std::move(b.tree);
}

}  // namespace detail

/// Grows a tree on `rows` of `data`. Rows may repeat (bootstrap samples); a
/// repeated row counts once per occurrence in leaf counts and means.
inline Tree grow(const Dataset& data, std::span<const std::size_t> rows, const StoppingRule& stopping) {
  require(!rows.empty(), "cannot grow a tree on zero rows");
  Tree::Builder b;
  b.init(data, rows, stopping);
  b.add_node(0, rows.size(), -1);
  if (stopping.kind() == StoppingRule::Kind::min_cell_size) {
    if (rows.size() < stopping.value()) {
      throw GrowthError("sample of " + std::to_string(rows.size()) + " rows is smaller than minimum cell size " +
                        std::to_string(stopping.value()));
    }
    return detail::grow_min_cell_size(b, stopping.value());
  }
  return detail::grow_exact_splits(b, stopping.value());
}

inline Tree grow(const Dataset& data, const StoppingRule& stopping) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return grow(data, rows, stopping);
}

inline double predict(const Tree& tree, std::span<const double> x0) { return tree.predict(x0); }

inline WeightVector weights(const Tree& tree, std::span<const double> x0) { return tree.weights(x0); }

inline CellInfo cell_of(const Tree& tree, std::span<const double> x0) { return tree.cell_of(x0); }

/// Rows of `estimation` that the tree routes into x0's leaf.
inline std::vector<std::size_t> honest_members(const Tree& tree, const Dataset& estimation,
                                               std::span<const double> x0) {
  require(estimation.dim() == tree.dim(), "estimation set has the wrong dimension");
  const std::size_t leaf = tree.leaf_index(x0);
  std::vector<std::size_t> in_cell;
  for (std::size_t i = 0; i < estimation.size(); ++i) {
    if (tree.leaf_index(estimation.row(i)) == leaf) in_cell.push_back(i);
  }
  return in_cell;
}

/// Mean of estimation-set responses falling in x0's leaf.
inline double honest_predict(const Tree& tree, const Dataset& estimation, std::span<const double> x0) {
  const auto in_cell = honest_members(tree, estimation, x0);
  if (in_cell.empty()) throw Error("empty honest cell");
  double sum = 0.0;
  for (std::size_t i : in_cell) sum += estimation.y(i);
  return sum / static_cast<double>(in_cell.size());
}

/// One node per line in preorder: `I <feature> <threshold>` or `L <count> <mean>`.
inline std::string write_tree_text(const Tree& tree) {
  std::string out;
  std::vector<std::size_t> stack{0};
  const auto nodes = tree.nodes();
  while (!stack.empty()) {
    const Tree::Node& n = nodes[stack.back()];
    stack.pop_back();
    if (n.is_leaf()) {
      out += "L " + std::to_string(n.count) + " " + format_number(n.mean) + "\n";
    } else {
      out += "I " + std::to_string(n.split.feature) + " " + format_number(n.split.threshold) + "\n";
      stack.push_back(static_cast<std::size_t>(n.right));
      stack.push_back(static_cast<std::size_t>(n.left));
    }
  }
  return out;
}

/// Parses the preorder text format. The result predicts but carries no member
/// rows; `#` lines are skipped. Leaf split orders are not recoverable, so
/// internal nodes are numbered in preorder.
inline Tree read_tree_text(const std::string& text, std::size_t dim) {
  require(dim >= 1, "dimension must be at least 1");
  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      lines.push_back(line);
    }
  }
  require(!lines.empty(), "tree text holds no nodes");
  Tree::Builder b;
  b.init_parsed(dim);
  std::size_t next_line = 0;
  std::size_t order = 0;
  std::size_t leaves = 0;
  std::size_t train = 0;
  auto parse_one = [&](std::int64_t parent) -> std::size_t {
    if (next_line >= lines.size()) throw Error("tree text ends before the tree is complete");
    std::istringstream in(lines[next_line++]);
    char tag = 0;
    in >> tag;
    Tree::Node node;
    if (tag == 'I') {
      std::size_t feature = 0;
      std::string threshold;
      if (!(in >> feature >> threshold) || feature >= dim) throw Error("malformed internal node line");
      node.split = {feature, parse_number(threshold)};
      node.split_order = order++;
    } else if (tag == 'L') {
      std::string mean;
      if (!(in >> node.count >> mean)) throw Error("malformed leaf line");
      node.mean = parse_number(mean);
      ++leaves;
      train += node.count;
    } else {
      throw Error("unknown node tag in tree text");
    }
    return b.add_parsed(node, parent);
  };
  // Iterative preorder: each frame is a node and the number of children attached so far.
  struct Frame {
    std::size_t node;
    int attached;
  };
  std::vector<Frame> stack;
  const std::size_t root = parse_one(-1);
  if (b.node(root).split_order != no_limit) stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.attached == 2) {
      stack.pop_back();
      continue;
    }
    const std::size_t parent = top.node;
    const std::size_t child = parse_one(static_cast<std::int64_t>(parent));
    if (top.attached == 0) {
      b.node(parent).left = static_cast<std::int64_t>(child);
    } else {
      b.node(parent).right = static_cast<std::int64_t>(child);
    }
    ++top.attached;
    if (b.node(child).split_order != no_limit) stack.push_back({child, 0});
  }
  if (next_line != lines.size()) throw Error("trailing lines after a complete tree");
  b.finish_parsed(train, StoppingRule::exact_splits(leaves - 1));
  // Internal-node counts are the sums of their leaves.
  for (std::size_t i = b.tree.nodes().size(); i-- > 0;) {
    Tree::Node& n = b.node(i);
    if (n.is_leaf()) continue;
    const auto& l = b.node(static_cast<std::size_t>(n.left));
    const auto& r = b.node(static_cast<std::size_t>(n.right));
    n.count = l.count + r.count;
    n.mean = n.count > 0 ? (l.mean * static_cast<double>(l.count) + r.mean * static_cast<double>(r.count)) /
                               static_cast<double>(n.count)
                         : 0.0;
  }
  return std::move(b.tree);
}

}  // namespace subag

#include "afbart/tree.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace afbart {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::unique_ptr<TreeNode> clone(const TreeNode& node) {
  auto out = std::make_unique<TreeNode>();
  out->rule = node.rule;
  if (!node.is_leaf()) {
    out->left = clone(*node.left);
    out->right = clone(*node.right);
  }
  return out;
}
}  // namespace

DecisionTree::DecisionTree(const DecisionTree& other) : root_(clone(*other.root_)) {}

DecisionTree& DecisionTree::operator=(const DecisionTree& other) {
  if (this != &other) root_ = clone(*other.root_);
  return *this;
}

namespace {

int count_leaves(const TreeNode& n) {
  if (n.is_leaf()) return 1;
  return count_leaves(*n.left) + count_leaves(*n.right);
}

int count_internal(const TreeNode& n) {
  if (n.is_leaf()) return 0;
  return 1 + count_internal(*n.left) + count_internal(*n.right);
}

int node_depth(const TreeNode& n) {
  if (n.is_leaf()) return 0;
  return 1 + std::max(node_depth(*n.left), node_depth(*n.right));
}

void collect_leaves(TreeNode& n, std::vector<TreeNode*>& out) {
  if (n.is_leaf()) {
    out.push_back(&n);
    return;
  }
  collect_leaves(*n.left, out);
  collect_leaves(*n.right, out);
}

void collect_internal(TreeNode& n, std::vector<TreeNode*>& out) {
  if (n.is_leaf()) return;
  out.push_back(&n);
  collect_internal(*n.left, out);
  collect_internal(*n.right, out);
}

void collect_prunable(TreeNode& n, std::vector<TreeNode*>& out) {
  if (n.is_leaf()) return;
  if (n.left->is_leaf() && n.right->is_leaf()) out.push_back(&n);
  collect_prunable(*n.left, out);
  collect_prunable(*n.right, out);
}

void collect_swap_pairs(TreeNode& n, std::vector<std::pair<TreeNode*, TreeNode*>>& out) {
  if (n.is_leaf()) return;
  if (!n.left->is_leaf()) out.emplace_back(&n, n.left.get());
  if (!n.right->is_leaf()) out.emplace_back(&n, n.right.get());
  collect_swap_pairs(*n.left, out);
  collect_swap_pairs(*n.right, out);
}

// Per-variable allowed cut-index ranges [lo, hi) under ancestor rules.
using Bounds = std::vector<std::pair<int, int>>;

Bounds root_bounds(const CutpointTable& table) {
  Bounds b(table.cuts.size());
  for (std::size_t v = 0; v < table.cuts.size(); ++v)
    b[v] = {0, static_cast<int>(table.cuts[v].size())};
  return b;
}

int n_available(const Bounds& b) {
  int total = 0;
  for (const auto& [lo, hi] : b) total += std::max(0, hi - lo);
  return total;
}

bool rule_available(const Bounds& b, const SplitRule& r) {
  const auto& [lo, hi] = b[static_cast<std::size_t>(r.var)];
  return r.cut_index >= lo && r.cut_index < hi;
}

// Bounds at a target node (ancestor constraints only); true once found.
bool bounds_at(const TreeNode& n, const TreeNode* target, Bounds& b) {
  if (&n == target) return true;
  if (n.is_leaf()) return false;
  auto v = static_cast<std::size_t>(n.rule.var);
  auto saved = b[v];
  b[v].second = n.rule.cut_index;
  if (bounds_at(*n.left, target, b)) return true;
  b[v] = saved;
  b[v].first = n.rule.cut_index + 1;
  if (bounds_at(*n.right, target, b)) return true;
  b[v] = saved;
  return false;
}

double log_prior_rec(const TreeNode& n, int depth, Bounds& b, double a,
                     double gamma, const CutpointTable& table) {
  const int avail = n_available(b);
  const double p_split = a * std::pow(gamma, depth);
  if (n.is_leaf()) return avail > 0 ? std::log1p(-p_split) : 0.0;
  if (avail == 0 || !rule_available(b, n.rule)) return kNegInf;
  double lp = std::log(p_split) - std::log(static_cast<double>(avail));
  auto v = static_cast<std::size_t>(n.rule.var);
  auto saved = b[v];
  b[v].second = n.rule.cut_index;
  lp += log_prior_rec(*n.left, depth + 1, b, a, gamma, table);
  b[v] = saved;
  b[v].first = n.rule.cut_index + 1;
  lp += log_prior_rec(*n.right, depth + 1, b, a, gamma, table);
  b[v] = saved;
  return lp;
}

int leaf_of_rec(const TreeNode& n, const Eigen::Ref<const Vector>& x, int& counter) {
  if (n.is_leaf()) return counter++;
  if (x(n.rule.var) <= n.rule.cut) return leaf_of_rec(*n.left, x, counter);
  counter += count_leaves(*n.left);
  return leaf_of_rec(*n.right, x, counter);
}

}  // namespace

int DecisionTree::num_leaves() const { return count_leaves(*root_); }
int DecisionTree::num_internal() const { return count_internal(*root_); }
int DecisionTree::depth() const { return node_depth(*root_); }

int DecisionTree::leaf_of(const Eigen::Ref<const Vector>& x) const {
  int counter = 0;
  return leaf_of_rec(*root_, x, counter);
}

std::vector<int> DecisionTree::leaf_assignments(const Matrix& x) const {
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (int i = 0; i < x.rows(); ++i)
    out[static_cast<std::size_t>(i)] = leaf_of(x.row(i).transpose());
  return out;
}

Vector ensemble_predict(const Ensemble& ens, const Eigen::Ref<const Vector>& x) {
  if (ens.trees.empty()) return Vector();
  Vector acc = Vector::Zero(ens.trees.front().second.mu.cols());
  for (const auto& [tree, params] : ens.trees)
    acc += params.mu.row(tree.leaf_of(x)).transpose();
  return acc;
}

CutpointTable build_cutpoints(const Matrix& x_enc,
                              const std::vector<EncodedColumn>& columns,
                              int n_cutpoints) {
  CutpointTable table;
  table.cuts.resize(static_cast<std::size_t>(x_enc.cols()));
  for (int v = 0; v < x_enc.cols(); ++v) {
    auto& cuts = table.cuts[static_cast<std::size_t>(v)];
    if (v < static_cast<int>(columns.size()) && columns[static_cast<std::size_t>(v)].indicator) {
      cuts = {0.5};
      continue;
    }
    std::vector<double> vals(x_enc.col(v).data(), x_enc.col(v).data() + x_enc.rows());
    std::sort(vals.begin(), vals.end());
    const double vmax = vals.back();
    const int n = static_cast<int>(vals.size());
    for (int q = 1; q <= n_cutpoints; ++q) {
      // equally spaced quantile levels; fractional ranks resolve to the
      // midpoint of the bracketing order statistics, so a threshold that
      // falls between observed values splits halfway across the gap
      double pos = (static_cast<double>(q) / (n_cutpoints + 1)) * (n - 1);
      int lo = static_cast<int>(std::floor(pos));
      double frac = pos - lo;
      double t = frac > 0.0 && lo + 1 < n
                     ? 0.5 * (vals[static_cast<std::size_t>(lo)] +
                              vals[static_cast<std::size_t>(lo) + 1])
                     : vals[static_cast<std::size_t>(lo)];
      if (t >= vmax) continue;  // a cut at the max cannot split
      if (cuts.empty() || t > cuts.back()) cuts.push_back(t);
    }
  }
  return table;
}

double log_tree_prior(const DecisionTree& tree, double a, double gamma,
                      const CutpointTable& cutpoints) {
  Bounds b = root_bounds(cutpoints);
  return log_prior_rec(tree.root(), 0, b, a, gamma, cutpoints);
}

namespace {

// GROW 0.25 / PRUNE 0.25 / CHANGE 0.40 / SWAP 0.10, renormalized over the
// moves available on this tree.
std::array<double, 4> move_probs(const DecisionTree& tree) {
  std::array<double, 4> p{0.25, 0.25, 0.40, 0.10};
  const int n_int = tree.num_internal();
  std::vector<TreeNode*> prunable;
  collect_prunable(const_cast<TreeNode&>(tree.root()), prunable);
  std::vector<std::pair<TreeNode*, TreeNode*>> pairs;
  collect_swap_pairs(const_cast<TreeNode&>(tree.root()), pairs);
  if (prunable.empty()) p[1] = 0.0;
  if (n_int == 0) p[2] = 0.0;
  if (pairs.empty()) p[3] = 0.0;
  double total = p[0] + p[1] + p[2] + p[3];
  for (double& v : p) v /= total;
  return p;
}

bool any_empty_leaf(const DecisionTree& tree, const Matrix& x_enc) {
  std::vector<int> counts(static_cast<std::size_t>(tree.num_leaves()), 0);
  for (int idx : tree.leaf_assignments(x_enc)) ++counts[static_cast<std::size_t>(idx)];
  return std::find(counts.begin(), counts.end(), 0) != counts.end();
}

SplitRule pick_rule(const Bounds& b, const CutpointTable& table, int which) {
  for (std::size_t v = 0; v < b.size(); ++v) {
    int span = std::max(0, b[v].second - b[v].first);
    if (which < span) {
      SplitRule r;
      r.var = static_cast<int>(v);
      r.cut_index = b[v].first + which;
      r.cut = table.cuts[v][static_cast<std::size_t>(r.cut_index)];
      return r;
    }
    which -= span;
  }
  throw std::logic_error("rule index out of range");
}

Proposal auto_reject(const DecisionTree& tree, MoveType move) {
  Proposal prop;
  prop.tree = tree;
  prop.log_q_ratio = kNegInf;
  prop.move = move;
  prop.auto_rejected = true;
  return prop;
}

}  // namespace

Proposal propose(const DecisionTree& tree, const Matrix& x_enc,
                 const CutpointTable& cutpoints, Rng& rng) {
  const auto probs = move_probs(tree);
  double u = rng.uniform();
  int move = 0;
  double acc = probs[0];
  while (move < 3 && u >= acc) acc += probs[++move];

  Proposal prop;
  prop.tree = tree;
  DecisionTree& t = prop.tree;

  if (move == 0) {  // GROW
    prop.move = MoveType::Grow;
    std::vector<TreeNode*> leaves;
    collect_leaves(t.root(), leaves);
    const int n_leaves = static_cast<int>(leaves.size());
    TreeNode* leaf = leaves[rng.uniform_index(leaves.size())];
    Bounds b = root_bounds(cutpoints);
    bounds_at(t.root(), leaf, b);
    const int avail = n_available(b);
    if (avail == 0) return auto_reject(tree, MoveType::Grow);
    leaf->rule = pick_rule(b, cutpoints, static_cast<int>(rng.uniform_index(static_cast<std::size_t>(avail))));
    leaf->left = std::make_unique<TreeNode>();
    leaf->right = std::make_unique<TreeNode>();
    if (any_empty_leaf(t, x_enc)) return auto_reject(tree, MoveType::Grow);

    std::vector<TreeNode*> prunable_star;
    collect_prunable(t.root(), prunable_star);
    const auto probs_star = move_probs(t);
    double log_fwd = std::log(probs[0]) - std::log(static_cast<double>(n_leaves)) -
                     std::log(static_cast<double>(avail));
    double log_rev = std::log(probs_star[1]) -
                     std::log(static_cast<double>(prunable_star.size()));
    prop.log_q_ratio = log_rev - log_fwd;
  } else if (move == 1) {  // PRUNE
    prop.move = MoveType::Prune;
    std::vector<TreeNode*> prunable;
    collect_prunable(t.root(), prunable);
    const int n_prunable = static_cast<int>(prunable.size());
    TreeNode* node = prunable[rng.uniform_index(prunable.size())];
    Bounds b = root_bounds(cutpoints);
    bounds_at(t.root(), node, b);
    const int avail = n_available(b);
    node->left.reset();
    node->right.reset();

    const auto probs_star = move_probs(t);
    double log_fwd = std::log(probs[1]) - std::log(static_cast<double>(n_prunable));
    double log_rev = std::log(probs_star[0]) -
                     std::log(static_cast<double>(t.num_leaves())) -
                     std::log(static_cast<double>(avail));
    prop.log_q_ratio = log_rev - log_fwd;
  } else if (move == 2) {  // CHANGE
    prop.move = MoveType::Change;
    std::vector<TreeNode*> internal;
    collect_internal(t.root(), internal);
    TreeNode* node = internal[rng.uniform_index(internal.size())];
    Bounds b = root_bounds(cutpoints);
    bounds_at(t.root(), node, b);
    const int avail = n_available(b);
    if (avail == 0) return auto_reject(tree, MoveType::Change);
    node->rule = pick_rule(b, cutpoints, static_cast<int>(rng.uniform_index(static_cast<std::size_t>(avail))));
    if (any_empty_leaf(t, x_enc)) return auto_reject(tree, MoveType::Change);
    prop.log_q_ratio = 0.0;  // symmetric: same node set, same available-rule count
  } else {  // SWAP
    prop.move = MoveType::Swap;
    std::vector<std::pair<TreeNode*, TreeNode*>> pairs;
    collect_swap_pairs(t.root(), pairs);
    auto [parent, child] = pairs[rng.uniform_index(pairs.size())];
    std::swap(parent->rule, child->rule);
    if (any_empty_leaf(t, x_enc)) return auto_reject(tree, MoveType::Swap);
    prop.log_q_ratio = 0.0;  // symmetric pair choice on an unchanged topology
  }
  return prop;
}

namespace {
void count_splits(const TreeNode& n, std::vector<int>& counts, int& total) {
  if (n.is_leaf()) return;
  ++counts[static_cast<std::size_t>(n.rule.var)];
  ++total;
  count_splits(*n.left, counts, total);
  count_splits(*n.right, counts, total);
}
}  // namespace

Vector splitting_proportions(const Ensemble& ens, int p_enc) {
  Vector s = Vector::Zero(p_enc);
  int trees_with_split = 0;
  for (const auto& [tree, params] : ens.trees) {
    std::vector<int> counts(static_cast<std::size_t>(p_enc), 0);
    int total = 0;
    count_splits(tree.root(), counts, total);
    if (total == 0) continue;
    ++trees_with_split;
    for (int v = 0; v < p_enc; ++v)
      s(v) += static_cast<double>(counts[static_cast<std::size_t>(v)]) / total;
  }
  if (trees_with_split > 0) s /= static_cast<double>(trees_with_split);
  return s;
}

namespace {
nlohmann::json node_to_json(const TreeNode& n, int& leaf_counter) {
  if (n.is_leaf()) return nlohmann::json{{"leaf", leaf_counter++}};
  return nlohmann::json{
      {"split", {{"var", n.rule.var}, {"cut", n.rule.cut}, {"cut_index", n.rule.cut_index}}},
      {"left", node_to_json(*n.left, leaf_counter)},
      {"right", node_to_json(*n.right, leaf_counter)}};
}

std::unique_ptr<TreeNode> node_from_json(const nlohmann::json& j) {
  auto node = std::make_unique<TreeNode>();
  if (j.contains("leaf")) return node;
  node->rule.var = j.at("split").at("var").get<int>();
  node->rule.cut = j.at("split").at("cut").get<double>();
  node->rule.cut_index = j.at("split").value("cut_index", 0);
  node->left = node_from_json(j.at("left"));
  node->right = node_from_json(j.at("right"));
  return node;
}
}  // namespace

nlohmann::json tree_to_json(const DecisionTree& tree) {
  int counter = 0;
  return node_to_json(tree.root(), counter);
}

DecisionTree tree_from_json(const nlohmann::json& j) {
  DecisionTree tree;
  auto root = node_from_json(j);
  tree.root().rule = root->rule;
  tree.root().left = std::move(root->left);
  tree.root().right = std::move(root->right);
  return tree;
}

}  // namespace afbart

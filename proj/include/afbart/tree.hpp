#pragma once

#include <memory>
#include <vector>

#include <json.hpp>

#include "afbart/rng.hpp"
#include "afbart/types.hpp"

namespace afbart {

// Discrete universe of splitting rules: per encoded variable, a sorted list
// of candidate thresholds. Indicator columns carry the single cutpoint 0.5.
struct CutpointTable {
  std::vector<std::vector<double>> cuts;

  int n_vars() const { return static_cast<int>(cuts.size()); }
};

CutpointTable build_cutpoints(const Matrix& x_enc,
                              const std::vector<EncodedColumn>& columns,
                              int n_cutpoints);

struct SplitRule {
  int var = 0;
  int cut_index = 0;  // index into CutpointTable::cuts[var]
  double cut = 0.0;
};

struct TreeNode {
  std::unique_ptr<TreeNode> left, right;
  SplitRule rule;  // meaningful only when internal

  bool is_leaf() const { return !left; }
};

class DecisionTree {
 public:
  DecisionTree() : root_(std::make_unique<TreeNode>()) {}
  DecisionTree(const DecisionTree& other);
  DecisionTree& operator=(const DecisionTree& other);
  DecisionTree(DecisionTree&&) = default;
  DecisionTree& operator=(DecisionTree&&) = default;

  TreeNode& root() { return *root_; }
  const TreeNode& root() const { return *root_; }

  int num_leaves() const;
  int num_internal() const;
  int depth() const;

  // Leaf containing x, indexed in depth-first (left-first) order.
  int leaf_of(const Eigen::Ref<const Vector>& x) const;

  // Leaf index per row of x.
  std::vector<int> leaf_assignments(const Matrix& x) const;

 private:
  std::unique_ptr<TreeNode> root_;
};

// Leaf parameter block, row l = mu_l in the tree's leaf order.
struct NodeParams {
  Matrix mu;  // L x J
};

struct Ensemble {
  std::vector<std::pair<DecisionTree, NodeParams>> trees;

  int size() const { return static_cast<int>(trees.size()); }
};

// g(x) = sum over trees of the leaf parameter row containing x.
Vector ensemble_predict(const Ensemble& ens, const Eigen::Ref<const Vector>& x);

// Log prior of the topology and rules under the generative process: a node
// at depth d with at least one available rule is internal with probability
// a*gamma^d, its rule uniform over the rules available under its ancestor
// constraints; a node with no available rule is terminal with certainty.
// -inf if any internal node holds an unavailable rule.
double log_tree_prior(const DecisionTree& tree, double a, double gamma,
                      const CutpointTable& cutpoints);

enum class MoveType { Grow, Prune, Change, Swap };

struct Proposal {
  DecisionTree tree;
  double log_q_ratio = 0.0;  // log q(T* -> T) - log q(T -> T*)
  MoveType move = MoveType::Grow;
  bool auto_rejected = false;
};

// One MH proposal: GROW 0.25 / PRUNE 0.25 / CHANGE 0.40 / SWAP 0.10 with
// unavailable-move mass renormalized. Proposals that would create a leaf
// with no training point return the original tree with log_q_ratio = -inf.
Proposal propose(const DecisionTree& tree, const Matrix& x_enc,
                 const CutpointTable& cutpoints, Rng& rng);

// Per-variable splitting proportions s_j averaged over trees with at least
// one split; zero vector when every tree is a stump.
Vector splitting_proportions(const Ensemble& ens, int p_enc);

nlohmann::json tree_to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const nlohmann::json& j);

}  // namespace afbart

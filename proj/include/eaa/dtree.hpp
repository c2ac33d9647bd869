#pragma once

// CART classification trees and the explanation machinery built on them:
// decision-path extraction, partial-tree reconstruction from received paths,
// and feature-set queries.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "eaa/gridworld.hpp"

namespace eaa {

using NodeId = std::uint32_t;

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InternalNode {
  std::size_t feature = 0;
  double threshold = 0.0;  // feature <= threshold goes left
  NodeId left = 0;
  NodeId right = 0;
  bool operator==(const InternalNode&) const = default;
};

struct LeafNode {
  ActionId action = 0;
  double probability = 1.0;  // majority count / samples at the leaf
  std::vector<std::pair<ActionId, std::size_t>> class_counts;  // ascending action id
  bool operator==(const LeafNode&) const = default;
};

struct TreeNode {
  NodeId id = 0;
  std::variant<InternalNode, LeafNode> kind;

  bool is_leaf() const { return std::holds_alternative<LeafNode>(kind); }
  const InternalNode& internal() const { return std::get<InternalNode>(kind); }
  const LeafNode& leaf() const { return std::get<LeafNode>(kind); }
  bool operator==(const TreeNode&) const = default;
};

/// Immutable binary tree. Node ids are dense (node i is nodes()[i]) and
/// stable, which is what lets paths be merged back into a partial copy.
class DecisionTreePolicy {
 public:
  DecisionTreePolicy(std::vector<TreeNode> nodes, NodeId root, std::vector<std::string> feature_names);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(NodeId id) const;
  NodeId root() const { return root_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  std::size_t num_features() const { return feature_names_.size(); }
  std::size_t depth() const;
  std::uint64_t fingerprint() const { return fingerprint_; }

  bool operator==(const DecisionTreePolicy& other) const {
    return root_ == other.root_ && nodes_ == other.nodes_ && feature_names_ == other.feature_names_;
  }

 private:
  std::vector<TreeNode> nodes_;
  NodeId root_;
  std::vector<std::string> feature_names_;
  std::uint64_t fingerprint_ = 0;
};

struct Sample {
  StateFeatures features;
  ActionId action = 0;
};

struct CartParams {
  std::size_t max_depth = 12;
  std::size_t min_samples_split = 2;
};

inline constexpr std::size_t kUnlimitedDepth = std::numeric_limits<std::size_t>::max();

/// Greedy top-down CART with Gini impurity. Thresholds are midpoints between
/// consecutive distinct values; ties go to the lowest feature index, then the
/// lowest threshold. Feature names default to f0, f1, ...
DecisionTreePolicy fit_cart(std::span<const Sample> dataset, const CartParams& params,
                            std::vector<std::string> feature_names = {});

struct Prediction {
  ActionId action = 0;
  double probability = 0.0;
  bool operator==(const Prediction&) const = default;
};

Prediction predict(const DecisionTreePolicy& tree, std::span<const double> features);

enum class Branch : std::uint8_t { Left, Right };

struct Predicate {
  std::size_t feature = 0;
  double threshold = 0.0;
  Branch direction = Branch::Left;
  bool holds(std::span<const double> features) const;
  bool operator==(const Predicate&) const = default;
};

/// Root-to-leaf explanation. node_ids has one more entry than predicates:
/// the internal nodes in order, then the leaf.
struct DecisionPath {
  std::vector<Predicate> predicates;
  ActionId leaf_action = 0;
  double leaf_probability = 0.0;
  std::vector<NodeId> node_ids;
  std::uint64_t source_fingerprint = 0;

  bool matches(std::span<const double> features) const;
  bool operator==(const DecisionPath&) const = default;
};

DecisionPath extract_path(const DecisionTreePolicy& tree, std::span<const double> features);

/// The student's reconstructed sub-tree of a source tree.
class PartialTree {
 public:
  struct Internal {
    std::size_t feature = 0;
    double threshold = 0.0;
    std::optional<NodeId> left;
    std::optional<NodeId> right;
    bool operator==(const Internal&) const = default;
  };
  struct Leaf {
    ActionId action = 0;
    double probability = 0.0;
    bool operator==(const Leaf&) const = default;
  };
  using Node = std::variant<Internal, Leaf>;

  explicit PartialTree(std::uint64_t source_fingerprint = 0) : fingerprint_(source_fingerprint) {}
  static PartialTree of(const DecisionTreePolicy& source) { return PartialTree(source.fingerprint()); }

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  bool contains(NodeId id) const { return nodes_.count(id) != 0; }
  std::optional<NodeId> root() const { return root_; }
  const Node* find(NodeId id) const;
  const std::map<NodeId, Node>& nodes() const { return nodes_; }
  std::uint64_t source_fingerprint() const { return fingerprint_; }

  bool operator==(const PartialTree&) const = default;

 private:
  friend void store_path(PartialTree& partial, const DecisionPath& path);

  std::map<NodeId, Node> nodes_;
  std::optional<NodeId> root_;
  std::uint64_t fingerprint_;
};

/// Merges a path into the partial tree: finds the first path node missing
/// from the tree and attaches it and every later node under its parent on the
/// recorded branch. Existing nodes are never modified. Throws TreeError when
/// the path comes from a different tree.
void store_path(PartialTree& partial, const DecisionPath& path);

/// Same traversal as predict, but undecided as soon as a needed child is missing.
std::optional<Prediction> query_partial(const PartialTree& partial, std::span<const double> features);

/// The stored path that decides `features`, if any.
std::optional<DecisionPath> partial_path(const PartialTree& partial, std::span<const double> features);

std::set<std::size_t> tree_features(const DecisionTreePolicy& tree);
std::set<std::size_t> tree_features(const PartialTree& partial);

// Text format, one node per line, round-trip exact:
//   eaa-tree v1
//   features <n> <name_0> ... <name_n-1>
//   nodes <k> root <id>
//   <id> internal <feature> <threshold> <left> <right>
//   <id> leaf <action> <probability> <m> <action>:<count> ...
void write_tree(std::ostream& out, const DecisionTreePolicy& tree);
DecisionTreePolicy read_tree(std::istream& in);

//   eaa-trees v1 <count>   followed by <count> tree blocks
void write_trees(std::ostream& out, std::span<const DecisionTreePolicy> trees);
std::vector<DecisionTreePolicy> read_trees(std::istream& in);

/// Graphviz rendering; `action_label` maps action ids to display names.
std::string to_dot(const DecisionTreePolicy& tree,
                   const std::vector<std::string>& action_labels = {});

}  // namespace eaa

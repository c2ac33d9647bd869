#include "eaa/dtree.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "eaa/text.hpp"

namespace eaa {

namespace {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

DecisionTreePolicy::DecisionTreePolicy(std::vector<TreeNode> nodes, NodeId root,
                                       std::vector<std::string> feature_names)
    : nodes_(std::move(nodes)), root_(root), feature_names_(std::move(feature_names)) {
  if (nodes_.empty()) throw TreeError("tree has no nodes");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id != i) throw TreeError("node ids must be dense and ordered");
  }
  if (root_ >= nodes_.size()) throw TreeError("root id out of range");

  // Every node must be reached exactly once from the root.
  std::vector<int> parents(nodes_.size(), 0);
  for (const auto& n : nodes_) {
    if (n.is_leaf()) {
      const auto& leaf = n.leaf();
      if (!(leaf.probability >= 0.0 && leaf.probability <= 1.0)) {
        throw TreeError("leaf probability outside [0, 1]");
      }
      continue;
    }
    const auto& in = n.internal();
    if (in.left >= nodes_.size() || in.right >= nodes_.size()) {
      throw TreeError("node " + std::to_string(n.id) + " has a dangling child id");
    }
    if (in.feature >= feature_names_.size()) throw TreeError("split feature out of range");
    ++parents[in.left];
    ++parents[in.right];
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const int expected = i == root_ ? 0 : 1;
    if (parents[i] != expected) throw TreeError("tree is not a single rooted acyclic tree");
  }
  // A root with no parent plus one parent per other node can still hide a
  // cycle detached from the root; count what is reachable.
  std::size_t reached = 0;
  std::vector<NodeId> stack{root_};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    if (++reached > nodes_.size()) break;
    if (!nodes_[id].is_leaf()) {
      stack.push_back(nodes_[id].internal().left);
      stack.push_back(nodes_[id].internal().right);
    }
  }
  if (reached != nodes_.size()) throw TreeError("tree is not a single rooted acyclic tree");

  std::ostringstream ser;
  write_tree(ser, *this);
  fingerprint_ = fnv1a(ser.str());
}

const TreeNode& DecisionTreePolicy::node(NodeId id) const {
  if (id >= nodes_.size()) throw TreeError("dangling node id " + std::to_string(id));
  return nodes_[id];
}

std::size_t DecisionTreePolicy::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<NodeId, std::size_t>> stack{{root_, 0}};
  while (!stack.empty()) {
    const auto [id, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes_[id].is_leaf()) {
      stack.emplace_back(nodes_[id].internal().left, d + 1);
      stack.emplace_back(nodes_[id].internal().right, d + 1);
    }
  }
  return best;
}

// ---------------------------------------------------------------- CART

namespace {

struct CartBuilder {
  std::span<const Sample> data;
  CartParams params;
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<TreeNode> nodes;

  static double gini(const std::vector<std::size_t>& counts, std::size_t total) {
    if (total == 0) return 0.0;
    double sum_sq = 0.0;
    for (std::size_t c : counts) {
      const double p = static_cast<double>(c) / static_cast<double>(total);
      sum_sq += p * p;
    }
    return 1.0 - sum_sq;
  }

  LeafNode make_leaf(const std::vector<std::size_t>& counts, std::size_t total) const {
    LeafNode leaf;
    std::size_t best = 0;
    for (std::size_t a = 0; a < counts.size(); ++a) {
      if (counts[a] > 0) leaf.class_counts.emplace_back(a, counts[a]);
      if (counts[a] > counts[best]) best = a;
    }
    leaf.action = best;
    leaf.probability = static_cast<double>(counts[best]) / static_cast<double>(total);
    return leaf;
  }

  struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double decrease = -1.0;
  };

  std::optional<Split> best_split(std::vector<std::size_t>& idx, const std::vector<std::size_t>& counts) const {
    const std::size_t total = idx.size();
    const double parent = gini(counts, total);
    std::optional<Split> best;
    std::vector<std::size_t> left(num_classes);
    std::vector<std::size_t> right(num_classes);
    for (std::size_t f = 0; f < num_features; ++f) {
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return data[a].features[f] < data[b].features[f];
      });
      std::fill(left.begin(), left.end(), 0);
      right = counts;
      for (std::size_t i = 0; i + 1 < total; ++i) {
        const auto& s = data[idx[i]];
        ++left[s.action];
        --right[s.action];
        const double v = s.features[f];
        const double next = data[idx[i + 1]].features[f];
        if (!(v < next)) continue;
        const std::size_t nl = i + 1;
        const std::size_t nr = total - nl;
        const double weighted = (static_cast<double>(nl) * gini(left, nl) +
                                 static_cast<double>(nr) * gini(right, nr)) /
                                static_cast<double>(total);
        const double decrease = parent - weighted;
        // Strictly better only: earlier (feature, threshold) wins ties.
        if (!best || decrease > best->decrease + 1e-12) {
          best = Split{f, v + (next - v) / 2.0, decrease};
        }
      }
    }
    return best;
  }

  NodeId build(std::vector<std::size_t> idx, std::size_t depth) {
    const NodeId id = static_cast<NodeId>(nodes.size());
    nodes.push_back(TreeNode{id, LeafNode{}});

    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i : idx) ++counts[data[i].action];
    const std::size_t total = idx.size();
    const bool pure = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1;

    if (pure || depth >= params.max_depth || total < params.min_samples_split) {
      nodes[id].kind = make_leaf(counts, total);
      return id;
    }
    const auto split = best_split(idx, counts);
    if (!split) {
      nodes[id].kind = make_leaf(counts, total);
      return id;
    }

    std::vector<std::size_t> left_idx;
    std::vector<std::size_t> right_idx;
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) {
      (data[i].features[split->feature] <= split->threshold ? left_idx : right_idx).push_back(i);
    }
    const NodeId left = build(std::move(left_idx), depth + 1);
    const NodeId right = build(std::move(right_idx), depth + 1);
    nodes[id].kind = InternalNode{split->feature, split->threshold, left, right};
    return id;
  }
};

}  // namespace

DecisionTreePolicy fit_cart(std::span<const Sample> dataset, const CartParams& params,
                            std::vector<std::string> feature_names) {
  if (dataset.empty()) throw std::invalid_argument("fit_cart: empty dataset");
  const std::size_t width = dataset.front().features.size();
  std::size_t max_label = 0;
  for (const auto& s : dataset) {
    if (s.features.size() != width) throw std::invalid_argument("fit_cart: ragged feature vectors");
    max_label = std::max(max_label, s.action);
  }
  if (feature_names.empty()) {
    for (std::size_t f = 0; f < width; ++f) feature_names.push_back("f" + std::to_string(f));
  }
  if (feature_names.size() != width) throw std::invalid_argument("fit_cart: feature name count mismatch");

  CartBuilder b{dataset, params, width, max_label + 1, {}};
  std::vector<std::size_t> idx(dataset.size());
  std::iota(idx.begin(), idx.end(), 0);
  const NodeId root = b.build(std::move(idx), 0);
  return DecisionTreePolicy(std::move(b.nodes), root, std::move(feature_names));
}

// ---------------------------------------------------------------- traversal

namespace {

void check_width(const DecisionTreePolicy& tree, std::span<const double> features) {
  if (features.size() != tree.num_features()) {
    throw std::invalid_argument("feature vector has " + std::to_string(features.size()) +
                                " entries, tree expects " + std::to_string(tree.num_features()));
  }
}

}  // namespace

Prediction predict(const DecisionTreePolicy& tree, std::span<const double> features) {
  check_width(tree, features);
  const TreeNode* n = &tree.node(tree.root());
  while (!n->is_leaf()) {
    const auto& in = n->internal();
    n = &tree.node(features[in.feature] <= in.threshold ? in.left : in.right);
  }
  return {n->leaf().action, n->leaf().probability};
}

bool Predicate::holds(std::span<const double> features) const {
  const bool left = features[feature] <= threshold;
  return direction == Branch::Left ? left : !left;
}

bool DecisionPath::matches(std::span<const double> features) const {
  return std::all_of(predicates.begin(), predicates.end(),
                     [&](const Predicate& p) { return p.holds(features); });
}

DecisionPath extract_path(const DecisionTreePolicy& tree, std::span<const double> features) {
  check_width(tree, features);
  DecisionPath path;
  path.source_fingerprint = tree.fingerprint();
  const TreeNode* n = &tree.node(tree.root());
  while (!n->is_leaf()) {
    const auto& in = n->internal();
    const bool left = features[in.feature] <= in.threshold;
    path.node_ids.push_back(n->id);
    path.predicates.push_back({in.feature, in.threshold, left ? Branch::Left : Branch::Right});
    n = &tree.node(left ? in.left : in.right);
  }
  path.node_ids.push_back(n->id);
  path.leaf_action = n->leaf().action;
  path.leaf_probability = n->leaf().probability;
  return path;
}

// ---------------------------------------------------------------- partial tree

const PartialTree::Node* PartialTree::find(NodeId id) const {
  const auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

void store_path(PartialTree& partial, const DecisionPath& path) {
  if (path.source_fingerprint != partial.fingerprint_) {
    throw TreeError("store_path: path originates from a different tree");
  }
  const std::size_t d = path.node_ids.size();
  if (d != path.predicates.size() + 1) throw TreeError("store_path: malformed path");

  std::size_t k = 0;
  while (k < d && partial.contains(path.node_ids[k])) ++k;
  if (k == d) return;
  if (k == 0 && partial.root_) throw TreeError("store_path: path root differs from the stored root");

  auto make_node = [&](std::size_t i) -> PartialTree::Node {
    if (i + 1 == d) return PartialTree::Leaf{path.leaf_action, path.leaf_probability};
    return PartialTree::Internal{path.predicates[i].feature, path.predicates[i].threshold, {}, {}};
  };

  for (std::size_t i = k; i < d; ++i) {
    const NodeId id = path.node_ids[i];
    partial.nodes_.emplace(id, make_node(i));
    if (i == 0) {
      partial.root_ = id;
      continue;
    }
    auto* parent = std::get_if<PartialTree::Internal>(&partial.nodes_.at(path.node_ids[i - 1]));
    if (parent == nullptr) throw TreeError("store_path: parent node is a leaf");
    auto& slot = path.predicates[i - 1].direction == Branch::Left ? parent->left : parent->right;
    if (slot && *slot != id) throw TreeError("store_path: conflicting child");
    slot = id;
  }
}

namespace {

// Walks the partial tree; calls on_step(node_id, predicate) per internal node.
template <typename OnStep>
const PartialTree::Leaf* walk_partial(const PartialTree& partial, std::span<const double> features,
                                      NodeId* leaf_id, OnStep&& on_step) {
  if (!partial.root()) return nullptr;
  NodeId id = *partial.root();
  while (true) {
    const auto* node = partial.find(id);
    if (node == nullptr) return nullptr;
    if (const auto* leaf = std::get_if<PartialTree::Leaf>(node)) {
      if (leaf_id) *leaf_id = id;
      return leaf;
    }
    const auto& in = std::get<PartialTree::Internal>(*node);
    if (in.feature >= features.size()) throw std::invalid_argument("feature vector too short for partial tree");
    const bool left = features[in.feature] <= in.threshold;
    on_step(id, Predicate{in.feature, in.threshold, left ? Branch::Left : Branch::Right});
    const auto& child = left ? in.left : in.right;
    if (!child) return nullptr;
    id = *child;
  }
}

}  // namespace

std::optional<Prediction> query_partial(const PartialTree& partial, std::span<const double> features) {
  const auto* leaf = walk_partial(partial, features, nullptr, [](NodeId, const Predicate&) {});
  if (leaf == nullptr) return std::nullopt;
  return Prediction{leaf->action, leaf->probability};
}

std::optional<DecisionPath> partial_path(const PartialTree& partial, std::span<const double> features) {
  DecisionPath path;
  path.source_fingerprint = partial.source_fingerprint();
  NodeId leaf_id = 0;
  const auto* leaf = walk_partial(partial, features, &leaf_id, [&](NodeId id, const Predicate& p) {
    path.node_ids.push_back(id);
    path.predicates.push_back(p);
  });
  if (leaf == nullptr) return std::nullopt;
  path.node_ids.push_back(leaf_id);
  path.leaf_action = leaf->action;
  path.leaf_probability = leaf->probability;
  return path;
}

std::set<std::size_t> tree_features(const DecisionTreePolicy& tree) {
  std::set<std::size_t> out;
  for (const auto& n : tree.nodes()) {
    if (!n.is_leaf()) out.insert(n.internal().feature);
  }
  return out;
}

std::set<std::size_t> tree_features(const PartialTree& partial) {
  std::set<std::size_t> out;
  for (const auto& [id, node] : partial.nodes()) {
    if (const auto* in = std::get_if<PartialTree::Internal>(&node)) out.insert(in->feature);
  }
  return out;
}

// ---------------------------------------------------------------- serialization

void write_tree(std::ostream& out, const DecisionTreePolicy& tree) {
  out << "eaa-tree v1\n";
  out << "features " << tree.feature_names().size();
  for (const auto& name : tree.feature_names()) out << ' ' << name;
  out << '\n';
  out << "nodes " << tree.nodes().size() << " root " << tree.root() << '\n';
  for (const auto& n : tree.nodes()) {
    out << n.id;
    if (n.is_leaf()) {
      const auto& l = n.leaf();
      out << " leaf " << l.action << ' ' << text::format_double(l.probability) << ' ' << l.class_counts.size();
      for (const auto& [a, c] : l.class_counts) out << ' ' << a << ':' << c;
    } else {
      const auto& in = n.internal();
      out << " internal " << in.feature << ' ' << text::format_double(in.threshold) << ' ' << in.left << ' '
          << in.right;
    }
    out << '\n';
  }
}

DecisionTreePolicy read_tree(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_tokens = [&]() {
    if (!std::getline(in, line)) throw TreeError("tree: unexpected end of input");
    ++line_no;
    return text::split_ws(text::trim(line));
  };
  auto fail = [&](const std::string& msg) { return TreeError("tree line " + std::to_string(line_no) + ": " + msg); };

  auto tokens = next_tokens();
  if (tokens.size() != 2 || tokens[0] != "eaa-tree" || tokens[1] != "v1") throw fail("bad header");

  tokens = next_tokens();
  if (tokens.size() < 2 || tokens[0] != "features") throw fail("expected 'features'");
  const auto nf = text::parse_uint<std::size_t>(tokens[1]);
  if (tokens.size() != nf + 2) throw fail("feature count mismatch");
  std::vector<std::string> names(tokens.begin() + 2, tokens.end());

  tokens = next_tokens();
  if (tokens.size() != 4 || tokens[0] != "nodes" || tokens[2] != "root") throw fail("expected 'nodes <k> root <id>'");
  const auto count = text::parse_uint<std::size_t>(tokens[1]);
  const auto root = text::parse_uint<NodeId>(tokens[3]);

  std::vector<TreeNode> nodes;
  try {
    for (std::size_t i = 0; i < count; ++i) {
      tokens = next_tokens();
      if (tokens.size() < 2) throw fail("short node line");
      TreeNode node;
      node.id = text::parse_uint<NodeId>(tokens[0]);
      if (tokens[1] == "internal") {
        if (tokens.size() != 6) throw fail("internal node expects 4 fields");
        node.kind = InternalNode{text::parse_uint<std::size_t>(tokens[2]), text::parse_double(tokens[3]),
                                 text::parse_uint<NodeId>(tokens[4]), text::parse_uint<NodeId>(tokens[5])};
      } else if (tokens[1] == "leaf") {
        if (tokens.size() < 5) throw fail("leaf node expects at least 3 fields");
        LeafNode leaf;
        leaf.action = text::parse_uint<ActionId>(tokens[2]);
        leaf.probability = text::parse_double(tokens[3]);
        const auto m = text::parse_uint<std::size_t>(tokens[4]);
        if (tokens.size() != 5 + m) throw fail("class count mismatch");
        for (std::size_t j = 0; j < m; ++j) {
          const auto parts = text::split(tokens[5 + j], ':');
          if (parts.size() != 2) throw fail("bad class count entry");
          leaf.class_counts.emplace_back(text::parse_uint<ActionId>(parts[0]), text::parse_uint<std::size_t>(parts[1]));
        }
        node.kind = std::move(leaf);
      } else {
        throw fail("unknown node kind");
      }
      nodes.push_back(std::move(node));
    }
  } catch (const std::invalid_argument& e) {
    throw fail(e.what());
  }
  return DecisionTreePolicy(std::move(nodes), root, std::move(names));
}

void write_trees(std::ostream& out, std::span<const DecisionTreePolicy> trees) {
  out << "eaa-trees v1 " << trees.size() << '\n';
  for (const auto& t : trees) write_tree(out, t);
}

std::vector<DecisionTreePolicy> read_trees(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw TreeError("trees: empty input");
  const auto hdr = text::split_ws(text::trim(line));
  if (hdr.size() != 3 || hdr[0] != "eaa-trees" || hdr[1] != "v1") throw TreeError("trees: bad header");
  const auto count = text::parse_uint<std::size_t>(hdr[2]);
  std::vector<DecisionTreePolicy> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(read_tree(in));
  return out;
}

std::string to_dot(const DecisionTreePolicy& tree, const std::vector<std::string>& action_labels) {
  std::ostringstream out;
  out << "digraph policy {\n  node [shape=box, fontname=\"Helvetica\"];\n";
  for (const auto& n : tree.nodes()) {
    out << "  n" << n.id << " [label=\"";
    if (n.is_leaf()) {
      const auto& l = n.leaf();
      if (l.action < action_labels.size()) {
        out << action_labels[l.action];
      } else {
        out << "action " << l.action;
      }
      out << "\\np=" << text::format_double(l.probability) << "\", style=rounded];\n";
    } else {
      const auto& in = n.internal();
      out << tree.feature_names()[in.feature] << " <= " << text::format_double(in.threshold) << "\"];\n";
      out << "  n" << n.id << " -> n" << in.left << " [label=\"yes\"];\n";
      out << "  n" << n.id << " -> n" << in.right << " [label=\"no\"];\n";
    }
  }
  out << "}\n";
  return out.str();
}

}  // namespace eaa

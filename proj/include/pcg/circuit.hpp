#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcg/error.hpp"
#include "pcg/numeric.hpp"

namespace pcg {

using NodeId = std::uint32_t;
using VarId = std::uint32_t;
using Category = std::uint16_t;

inline constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

enum class NodeType : std::uint8_t { Input = 0, Product = 1, Sum = 2 };

inline const char* to_string(NodeType t) {
  switch (t) {
    case NodeType::Input: return "input";
    case NodeType::Product: return "product";
    case NodeType::Sum: return "sum";
  }
  return "?";
}

/// Variable set over a fixed universe, stored as a bitset.
class Scope {
 public:
  Scope() = default;
  explicit Scope(std::size_t universe) : universe_(universe), words_((universe + 63) / 64, 0) {}

  std::size_t universe() const { return universe_; }

  void insert(std::size_t v) { words_[v / 64] |= std::uint64_t{1} << (v % 64); }

  bool contains(std::size_t v) const {
    return v < universe_ && ((words_[v / 64] >> (v % 64)) & 1U) != 0;
  }

  bool intersects(const Scope& other) const {
    std::size_t n = std::min(words_.size(), other.words_.size());
    for (std::size_t i = 0; i < n; ++i)
      if ((words_[i] & other.words_[i]) != 0) return true;
    return false;
  }

  void merge(const Scope& other) {
    std::size_t n = std::min(words_.size(), other.words_.size());
    for (std::size_t i = 0; i < n; ++i) words_[i] |= other.words_[i];
  }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  bool empty() const { return count() == 0; }

  std::vector<VarId> to_vector() const {
    std::vector<VarId> out;
    for (std::size_t v = 0; v < universe_; ++v)
      if (contains(v)) out.push_back(static_cast<VarId>(v));
    return out;
  }

  bool operator==(const Scope&) const = default;

 private:
  std::size_t universe_ = 0;
  std::vector<std::uint64_t> words_;
};

class CircuitBuilder;
class Circuit;
Circuit build_layers(Circuit circuit);
Circuit certify(Circuit circuit);

/// Layered DAG of input, product and sum nodes. Immutable once built; the
/// derived data (scopes, layers) is attached by `certify` / `build_layers`.
///
/// Edges are stored child-major in one contiguous array with per-node
/// offsets. Every edge carries a value-space parameter (1.0 under product
/// nodes) and its logarithm.
class Circuit {
 public:
  Circuit() = default;

  std::size_t num_nodes() const { return types_.size(); }
  std::size_t num_edges() const { return children_.size(); }
  std::size_t num_variables() const { return num_variables_; }
  std::size_t num_categories() const { return num_categories_; }
  std::size_t num_inputs() const { return leaf_params_.size() / std::max<std::size_t>(1, num_categories_); }
  NodeId root() const { return root_; }

  NodeType type(NodeId n) const { return types_[n]; }
  bool is_input(NodeId n) const { return types_[n] == NodeType::Input; }
  bool is_sum(NodeId n) const { return types_[n] == NodeType::Sum; }
  bool is_product(NodeId n) const { return types_[n] == NodeType::Product; }
  VarId variable(NodeId n) const { return variables_[n]; }
  std::uint32_t tie_group(NodeId n) const { return ties_[n]; }

  std::size_t edge_begin(NodeId n) const { return child_offsets_[n]; }
  std::size_t edge_end(NodeId n) const { return child_offsets_[n + 1]; }
  std::span<const NodeId> children(NodeId n) const {
    return {children_.data() + child_offsets_[n], child_offsets_[n + 1] - child_offsets_[n]};
  }
  std::span<const double> edge_params(NodeId n) const {
    return {edge_params_.data() + child_offsets_[n], child_offsets_[n + 1] - child_offsets_[n]};
  }
  std::span<const double> log_edge_params(NodeId n) const {
    return {log_edge_params_.data() + child_offsets_[n], child_offsets_[n + 1] - child_offsets_[n]};
  }
  std::span<const double> leaf_params(NodeId n) const {
    return {leaf_params_.data() + std::size_t{leaf_slot_[n]} * num_categories_, num_categories_};
  }
  std::span<const double> log_leaf_params(NodeId n) const {
    return {log_leaf_params_.data() + std::size_t{leaf_slot_[n]} * num_categories_, num_categories_};
  }
  std::uint32_t leaf_slot(NodeId n) const { return leaf_slot_[n]; }

  const std::vector<NodeId>& all_children() const { return children_; }
  const std::vector<std::uint32_t>& child_offsets() const { return child_offsets_; }
  const std::vector<double>& all_edge_params() const { return edge_params_; }
  const std::vector<double>& all_leaf_params() const { return leaf_params_; }

  /// True once layers are attached; inference passes require it.
  bool is_prepared() const { return !order_.empty(); }
  const std::vector<Scope>& scopes() const { return scopes_; }
  const Scope& scope(NodeId n) const { return scopes_[n]; }
  /// Nodes sorted by (layer, id): children always precede parents.
  std::span<const NodeId> order() const { return order_; }
  std::uint32_t layer(NodeId n) const { return layer_of_[n]; }
  std::size_t num_layers() const { return layer_offsets_.empty() ? 0 : layer_offsets_.size() - 1; }
  std::span<const NodeId> layer_nodes(std::size_t layer) const {
    return {order_.data() + layer_offsets_[layer], layer_offsets_[layer + 1] - layer_offsets_[layer]};
  }

  /// Same structure, new parameters (value space). Derived data is kept.
  Circuit with_parameters(std::vector<double> edge_params, std::vector<double> leaf_params) const {
    if (edge_params.size() != edge_params_.size() || leaf_params.size() != leaf_params_.size())
      throw Error(ErrorCode::DimMismatch, "parameter arrays do not match circuit structure");
    Circuit out = *this;
    out.edge_params_ = std::move(edge_params);
    out.leaf_params_ = std::move(leaf_params);
    out.refresh_log_params();
    return out;
  }

  void require_prepared() const {
    if (!is_prepared())
      throw Error(ErrorCode::NotPrepared, "circuit has no layering; call certify() first");
  }

 private:
  friend class CircuitBuilder;
  friend Circuit build_layers(Circuit circuit);
  friend Circuit certify(Circuit circuit);

  void refresh_log_params() {
    log_edge_params_.resize(edge_params_.size());
    for (std::size_t e = 0; e < edge_params_.size(); ++e) log_edge_params_[e] = safe_log(edge_params_[e]);
    log_leaf_params_.resize(leaf_params_.size());
    for (std::size_t i = 0; i < leaf_params_.size(); ++i) log_leaf_params_[i] = safe_log(leaf_params_[i]);
  }

  std::size_t num_variables_ = 0;
  std::size_t num_categories_ = 0;
  NodeId root_ = kNone;

  std::vector<NodeType> types_;
  std::vector<VarId> variables_;
  std::vector<std::uint32_t> ties_;
  std::vector<std::uint32_t> child_offsets_{0};
  std::vector<NodeId> children_;
  std::vector<double> edge_params_;
  std::vector<double> log_edge_params_;
  std::vector<std::uint32_t> leaf_slot_;
  std::vector<double> leaf_params_;
  std::vector<double> log_leaf_params_;

  std::vector<Scope> scopes_;
  std::vector<std::uint32_t> layer_of_;
  std::vector<NodeId> order_;
  std::vector<std::uint32_t> layer_offsets_;
};

/// Collects nodes; `build()` performs only shape checks so that malformed
/// graphs (cycles, dangling ids) can be constructed and then diagnosed by
/// `validate_structure`. Child ids may refer to nodes added later.
class CircuitBuilder {
 public:
  CircuitBuilder(std::size_t num_variables, std::size_t num_categories)
      : num_variables_(num_variables), num_categories_(num_categories) {}

  NodeId add_input(VarId variable, std::vector<double> probs, std::uint32_t tie = kNone) {
    if (probs.size() != num_categories_)
      throw Error(ErrorCode::DimMismatch, "input distribution must have one entry per category");
    nodes_.push_back({NodeType::Input, variable, tie, {}, {}, std::move(probs)});
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId add_product(std::vector<NodeId> children, std::uint32_t tie = kNone) {
    std::vector<double> ones(children.size(), 1.0);
    nodes_.push_back({NodeType::Product, kNone, tie, std::move(children), std::move(ones), {}});
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId add_sum(std::vector<NodeId> children, std::vector<double> weights, std::uint32_t tie = kNone) {
    if (children.size() != weights.size())
      throw Error(ErrorCode::DimMismatch, "sum node needs one weight per child");
    nodes_.push_back({NodeType::Sum, kNone, tie, std::move(children), std::move(weights), {}});
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  /// Sum node with uniform weights.
  NodeId add_sum(std::vector<NodeId> children) {
    std::vector<double> w(children.size(), children.empty() ? 0.0 : 1.0 / static_cast<double>(children.size()));
    return add_sum(std::move(children), std::move(w));
  }

  void set_root(NodeId root) { root_ = root; }
  std::size_t size() const { return nodes_.size(); }

  /// Root defaults to the last node added.
  Circuit build() const {
    Circuit c;
    c.num_variables_ = num_variables_;
    c.num_categories_ = num_categories_;
    c.root_ = root_ != kNone ? root_ : (nodes_.empty() ? kNone : static_cast<NodeId>(nodes_.size() - 1));
    std::uint32_t slots = 0;
    for (const auto& node : nodes_) {
      c.types_.push_back(node.type);
      c.variables_.push_back(node.variable);
      c.ties_.push_back(node.tie);
      c.children_.insert(c.children_.end(), node.children.begin(), node.children.end());
      c.edge_params_.insert(c.edge_params_.end(), node.weights.begin(), node.weights.end());
      c.child_offsets_.push_back(static_cast<std::uint32_t>(c.children_.size()));
      if (node.type == NodeType::Input) {
        c.leaf_slot_.push_back(slots++);
        c.leaf_params_.insert(c.leaf_params_.end(), node.probs.begin(), node.probs.end());
      } else {
        c.leaf_slot_.push_back(kNone);
      }
    }
    c.refresh_log_params();
    return c;
  }

 private:
  struct PendingNode {
    NodeType type;
    VarId variable;
    std::uint32_t tie;
    std::vector<NodeId> children;
    std::vector<double> weights;
    std::vector<double> probs;
  };

  std::size_t num_variables_;
  std::size_t num_categories_;
  NodeId root_ = kNone;
  std::vector<PendingNode> nodes_;
};

// ---------------------------------------------------------------------------
// Structural validation

enum class ViolationKind {
  NotSmooth,
  NotDecomposable,
  SumNotNormalized,
  LeafNotNormalized,
  NegativeParameter,
  VariableOutOfRange,
  NoChildren,
  RootScopeIncomplete,
};

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::NotSmooth: return "NotSmooth";
    case ViolationKind::NotDecomposable: return "NotDecomposable";
    case ViolationKind::SumNotNormalized: return "SumNotNormalized";
    case ViolationKind::LeafNotNormalized: return "LeafNotNormalized";
    case ViolationKind::NegativeParameter: return "NegativeParameter";
    case ViolationKind::VariableOutOfRange: return "VariableOutOfRange";
    case ViolationKind::NoChildren: return "NoChildren";
    case ViolationKind::RootScopeIncomplete: return "RootScopeIncomplete";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  NodeId node;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<Scope> scopes;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind, NodeId node) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.kind == kind && v.node == node; });
  }
};

inline constexpr double kSumTolerance = 1e-9;
inline constexpr double kLeafTolerance = 1e-12;

namespace detail {

// Postorder over every node; throws on dangling children and cycles.
inline std::vector<NodeId> checked_postorder(const Circuit& c) {
  const std::size_t n = c.num_nodes();
  if (n == 0) throw Error(ErrorCode::EmptyCircuit, "circuit has no nodes");
  for (NodeId v = 0; v < n; ++v)
    for (NodeId ch : c.children(v))
      if (ch >= n)
        throw Error(ErrorCode::DanglingChild,
                    "node " + std::to_string(v) + " references missing child " + std::to_string(ch), v);

  enum : std::uint8_t { kWhite, kGrey, kBlack };
  std::vector<std::uint8_t> color(n, kWhite);
  std::vector<NodeId> post;
  post.reserve(n);
  std::vector<std::pair<NodeId, std::size_t>> stack;
  for (NodeId start = 0; start < n; ++start) {
    if (color[start] != kWhite) continue;
    stack.emplace_back(start, 0);
    color[start] = kGrey;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      auto kids = c.children(v);
      if (next < kids.size()) {
        NodeId ch = kids[next++];
        if (color[ch] == kGrey)
          throw Error(ErrorCode::CyclicGraph, "cycle through node " + std::to_string(ch), ch);
        if (color[ch] == kWhite) {
          color[ch] = kGrey;
          stack.emplace_back(ch, 0);
        }
      } else {
        color[v] = kBlack;
        post.push_back(v);
        stack.pop_back();
      }
    }
  }
  return post;
}

inline void check_single_root(const Circuit& c) {
  std::vector<std::uint8_t> has_parent(c.num_nodes(), 0);
  for (NodeId ch : c.all_children()) has_parent[ch] = 1;
  std::vector<NodeId> roots;
  for (NodeId v = 0; v < c.num_nodes(); ++v)
    if (!has_parent[v]) roots.push_back(v);
  if (c.root() == kNone || c.root() >= c.num_nodes())
    throw Error(ErrorCode::MultipleRoots, "root id is not a node of the circuit");
  if (has_parent[c.root()])
    throw Error(ErrorCode::MultipleRoots, "designated root " + std::to_string(c.root()) + " has a parent",
                c.root());
  if (roots.size() != 1) {
    NodeId extra = roots[0] == c.root() ? roots[1] : roots[0];
    throw Error(ErrorCode::MultipleRoots,
                std::to_string(roots.size()) + " parentless nodes; extra root " + std::to_string(extra), extra);
  }
}

}  // namespace detail

/// Computes scopes bottom-up and reports every smoothness, decomposability
/// and normalization violation. Cycles, dangling children and multiple roots
/// abort with an Error carrying the location.
inline ValidationReport validate_structure(const Circuit& c) {
  auto post = detail::checked_postorder(c);
  detail::check_single_root(c);

  ValidationReport report;
  report.scopes.assign(c.num_nodes(), Scope(c.num_variables()));
  auto& scopes = report.scopes;
  auto flag = [&](ViolationKind k, NodeId n, std::string detail) {
    report.violations.push_back({k, n, std::move(detail)});
  };

  for (NodeId n : post) {
    switch (c.type(n)) {
      case NodeType::Input: {
        VarId v = c.variable(n);
        if (v >= c.num_variables()) {
          flag(ViolationKind::VariableOutOfRange, n, "variable " + std::to_string(v));
        } else {
          scopes[n].insert(v);
        }
        double total = 0.0;
        bool negative = false;
        for (double p : c.leaf_params(n)) {
          if (!(p >= 0.0)) negative = true;
          total += p;
        }
        if (negative) flag(ViolationKind::NegativeParameter, n, "input distribution has a negative entry");
        if (!(std::abs(total - 1.0) <= kLeafTolerance))
          flag(ViolationKind::LeafNotNormalized, n, "input distribution sums to " + std::to_string(total));
        break;
      }
      case NodeType::Product: {
        auto kids = c.children(n);
        if (kids.empty()) {
          flag(ViolationKind::NoChildren, n, "product without children");
          break;
        }
        bool overlap = false;
        for (NodeId ch : kids) {
          if (scopes[n].intersects(scopes[ch])) overlap = true;
          scopes[n].merge(scopes[ch]);
        }
        if (overlap) flag(ViolationKind::NotDecomposable, n, "product children share variables");
        break;
      }
      case NodeType::Sum: {
        auto kids = c.children(n);
        if (kids.empty()) {
          flag(ViolationKind::NoChildren, n, "sum without children");
          break;
        }
        bool mismatch = false;
        for (NodeId ch : kids) {
          if (!(scopes[ch] == scopes[kids[0]])) mismatch = true;
          scopes[n].merge(scopes[ch]);
        }
        if (mismatch) flag(ViolationKind::NotSmooth, n, "sum children have different scopes");
        double total = 0.0;
        bool negative = false;
        for (double w : c.edge_params(n)) {
          if (!(w >= 0.0)) negative = true;
          total += w;
        }
        if (negative) flag(ViolationKind::NegativeParameter, n, "sum node has a negative weight");
        if (!(std::abs(total - 1.0) <= kSumTolerance))
          flag(ViolationKind::SumNotNormalized, n, "sum weights add to " + std::to_string(total));
        break;
      }
    }
  }
  if (scopes[c.root()].count() != c.num_variables())
    flag(ViolationKind::RootScopeIncomplete, c.root(),
         "root covers " + std::to_string(scopes[c.root()].count()) + " of " +
             std::to_string(c.num_variables()) + " variables");
  return report;
}

/// Assigns layer(n) = 1 + max layer of its children (inputs at 0) and stores
/// the layer-sorted evaluation order.
inline Circuit build_layers(Circuit c) {
  const std::size_t n = c.num_nodes();
  if (n == 0) throw Error(ErrorCode::EmptyCircuit, "circuit has no nodes");
  for (NodeId v = 0; v < n; ++v)
    for (NodeId ch : c.children(v))
      if (ch >= n) throw Error(ErrorCode::DanglingChild, "missing child " + std::to_string(ch), v);

  // Kahn's algorithm on the child -> parent direction.
  std::vector<std::uint32_t> pending(n, 0);
  std::vector<std::uint32_t> parent_offsets(n + 1, 0);
  for (NodeId ch : c.all_children()) ++parent_offsets[ch + 1];
  for (std::size_t i = 0; i < n; ++i) parent_offsets[i + 1] += parent_offsets[i];
  std::vector<NodeId> parents(c.num_edges());
  {
    std::vector<std::uint32_t> cursor(parent_offsets.begin(), parent_offsets.end() - 1);
    for (NodeId v = 0; v < n; ++v)
      for (NodeId ch : c.children(v)) parents[cursor[ch]++] = v;
  }
  std::vector<std::uint32_t> layer(n, 0);
  std::vector<NodeId> ready;
  for (NodeId v = 0; v < n; ++v) {
    pending[v] = static_cast<std::uint32_t>(c.children(v).size());
    if (pending[v] == 0) ready.push_back(v);
  }
  std::size_t processed = 0;
  while (!ready.empty()) {
    NodeId v = ready.back();
    ready.pop_back();
    ++processed;
    for (std::size_t k = parent_offsets[v]; k < parent_offsets[v + 1]; ++k) {
      NodeId p = parents[k];
      layer[p] = std::max(layer[p], layer[v] + 1);
      if (--pending[p] == 0) ready.push_back(p);
    }
  }
  if (processed != n) {
    NodeId stuck = 0;
    while (pending[stuck] == 0) ++stuck;
    throw Error(ErrorCode::CyclicGraph, "cycle through node " + std::to_string(stuck), stuck);
  }

  std::uint32_t num_layers = *std::max_element(layer.begin(), layer.end()) + 1;
  c.layer_offsets_.assign(num_layers + 1, 0);
  for (auto l : layer) ++c.layer_offsets_[l + 1];
  for (std::size_t l = 0; l < num_layers; ++l) c.layer_offsets_[l + 1] += c.layer_offsets_[l];
  c.order_.assign(n, 0);
  std::vector<std::uint32_t> cursor(c.layer_offsets_.begin(), c.layer_offsets_.end() - 1);
  for (NodeId v = 0; v < n; ++v) c.order_[cursor[layer[v]]++] = v;
  c.layer_of_ = std::move(layer);
  return c;
}

/// Validates, attaches scopes and layers. Throws InvalidStructure on the
/// first violation; the returned circuit is certified for every pass.
inline Circuit certify(Circuit c) {
  auto report = validate_structure(c);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    throw Error(ErrorCode::InvalidStructure,
                std::string(to_string(v.kind)) + " at node " + std::to_string(v.node) + ": " + v.detail, v.node);
  }
  c = build_layers(std::move(c));
  c.scopes_ = std::move(report.scopes);
  return c;
}

/// Sum nodes have only product children and every parent of an input node
/// is a product node.
inline bool is_alternation_normal(const Circuit& c) {
  for (NodeId n = 0; n < c.num_nodes(); ++n) {
    for (NodeId ch : c.children(n)) {
      if (c.is_sum(n) && !c.is_product(ch)) return false;
      if (c.is_product(n) && c.is_product(ch)) return false;
    }
  }
  return true;
}

/// Returns an equivalent circuit in alternation normal form: nested sums are
/// merged with multiplied weights, nested products are flattened and inputs
/// directly under sums get a unary product parent. Already-normal circuits
/// come back with identical node ids.
inline Circuit normalize_alternation(const Circuit& c) {
  auto post = detail::checked_postorder(c);

  // A reference into the output: an original node, or a unary product
  // wrapping an original input node.
  struct Ref {
    NodeId node;
    bool wrapped;
    auto operator<=>(const Ref&) const = default;
  };
  struct Entry {
    Ref ref;
    double weight;
  };
  std::vector<std::vector<Entry>> flat(c.num_nodes());
  std::vector<std::uint8_t> changed(c.num_nodes(), 0);

  for (NodeId n : post) {
    auto kids = c.children(n);
    auto& out = flat[n];
    if (c.is_product(n)) {
      for (NodeId ch : kids) {
        if (c.is_product(ch)) {
          out.insert(out.end(), flat[ch].begin(), flat[ch].end());
          changed[n] = 1;
        } else {
          out.push_back({{ch, false}, 1.0});
        }
      }
    } else if (c.is_sum(n)) {
      auto weights = c.edge_params(n);
      auto add = [&](Ref r, double w) {
        for (auto& e : out)
          if (e.ref == r) {
            e.weight += w;
            changed[n] = 1;
            return;
          }
        out.push_back({r, w});
      };
      for (std::size_t k = 0; k < kids.size(); ++k) {
        NodeId ch = kids[k];
        if (c.is_sum(ch)) {
          changed[n] = 1;
          for (const auto& e : flat[ch]) add(e.ref, weights[k] * e.weight);
        } else if (c.is_input(ch)) {
          changed[n] = 1;
          add({ch, true}, weights[k]);
        } else {
          add({ch, false}, weights[k]);
        }
      }
    }
  }

  // Collect the references reachable from the root.
  std::map<Ref, NodeId> ids;
  std::vector<Ref> stack{{c.root(), false}};
  std::vector<Ref> seen;
  ids[stack.front()] = 0;
  while (!stack.empty()) {
    Ref r = stack.back();
    stack.pop_back();
    seen.push_back(r);
    auto visit = [&](Ref child) {
      if (ids.emplace(child, 0).second) stack.push_back(child);
    };
    if (r.wrapped) {
      visit({r.node, false});
    } else {
      for (const auto& e : flat[r.node]) visit(e.ref);
    }
  }
  std::sort(seen.begin(), seen.end(), [](const Ref& a, const Ref& b) {
    return a.wrapped != b.wrapped ? !a.wrapped : a.node < b.node;
  });
  for (std::size_t i = 0; i < seen.size(); ++i) ids[seen[i]] = static_cast<NodeId>(i);

  CircuitBuilder b(c.num_variables(), c.num_categories());
  for (const Ref& r : seen) {
    if (r.wrapped) {
      b.add_product({ids.at({r.node, false})});
      continue;
    }
    NodeId n = r.node;
    switch (c.type(n)) {
      case NodeType::Input: {
        auto p = c.leaf_params(n);
        b.add_input(c.variable(n), {p.begin(), p.end()}, c.tie_group(n));
        break;
      }
      case NodeType::Product: {
        std::vector<NodeId> kids;
        for (const auto& e : flat[n]) kids.push_back(ids.at(e.ref));
        b.add_product(std::move(kids), c.tie_group(n));
        break;
      }
      case NodeType::Sum: {
        std::vector<NodeId> kids;
        std::vector<double> w;
        for (const auto& e : flat[n]) {
          kids.push_back(ids.at(e.ref));
          w.push_back(e.weight);
        }
        b.add_sum(std::move(kids), std::move(w), changed[n] ? kNone : c.tie_group(n));
        break;
      }
    }
  }
  b.set_root(ids.at({c.root(), false}));
  Circuit out = b.build();
  if (c.is_prepared()) out = certify(std::move(out));
  return out;
}

// ---------------------------------------------------------------------------
// Image-structured scope bookkeeping

struct Box {
  std::uint32_t row_begin = 0, row_end = 0, col_begin = 0, col_end = 0;
  std::size_t area() const { return std::size_t{row_end - row_begin} * (col_end - col_begin); }
  bool operator==(const Box&) const = default;
};

/// Bounding box of every node's scope on a row-major height x width grid.
/// `exact[n]` is set when the scope fills its box completely.
struct ScopePartition {
  std::size_t height = 0, width = 0;
  std::vector<Box> boxes;
  std::vector<std::uint8_t> exact;
};

inline ScopePartition compute_scope_partition(const Circuit& c, std::size_t height, std::size_t width) {
  if (height * width != c.num_variables())
    throw Error(ErrorCode::DimMismatch, "grid does not match circuit variable count");
  const auto& scopes = c.scopes().empty() ? validate_structure(c).scopes : c.scopes();
  ScopePartition part{height, width, {}, {}};
  part.boxes.resize(c.num_nodes());
  part.exact.resize(c.num_nodes());
  for (NodeId n = 0; n < c.num_nodes(); ++n) {
    auto vars = scopes[n].to_vector();
    if (vars.empty()) continue;
    Box b{std::numeric_limits<std::uint32_t>::max(), 0, std::numeric_limits<std::uint32_t>::max(), 0};
    for (VarId v : vars) {
      auto r = static_cast<std::uint32_t>(v / width), col = static_cast<std::uint32_t>(v % width);
      b.row_begin = std::min(b.row_begin, r);
      b.row_end = std::max(b.row_end, r + 1);
      b.col_begin = std::min(b.col_begin, col);
      b.col_end = std::max(b.col_end, col + 1);
    }
    part.boxes[n] = b;
    part.exact[n] = b.area() == vars.size();
  }
  return part;
}

/// Children boxes of a product node are exact, pairwise disjoint and cover the
/// parent box.
inline bool product_children_tile(const Circuit& c, const ScopePartition& part, NodeId n) {
  if (!c.is_product(n) || !part.exact[n]) return false;
  const Box& parent = part.boxes[n];
  std::size_t area = 0;
  auto kids = c.children(n);
  for (std::size_t i = 0; i < kids.size(); ++i) {
    const Box& b = part.boxes[kids[i]];
    if (!part.exact[kids[i]]) return false;
    if (b.row_begin < parent.row_begin || b.row_end > parent.row_end || b.col_begin < parent.col_begin ||
        b.col_end > parent.col_end)
      return false;
    for (std::size_t j = 0; j < i; ++j) {
      const Box& o = part.boxes[kids[j]];
      bool disjoint = b.row_end <= o.row_begin || o.row_end <= b.row_begin || b.col_end <= o.col_begin ||
                      o.col_end <= b.col_begin;
      if (!disjoint) return false;
    }
    area += b.area();
  }
  return area == parent.area();
}

}  // namespace pcg

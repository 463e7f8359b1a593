#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcg/binary_io.hpp"
#include "pcg/circuit.hpp"

namespace pcg {

// PCIR layout, all little-endian:
//   "PCIR" | version u32 | numNodes u32 | numEdges u32 | numVariables u32 |
//   numCategories u32 | root u32
//   node table:  per node  type u8, variable u32, tie u32, childCount u32
//   edge array:  numEdges child ids u32
//   parameters:  numEdges f64 edge weights (1.0 under products), then
//                numInputs * numCategories f64 input probabilities
// Parameters are stored in value space; log-space copies are rebuilt on load.
inline constexpr std::uint32_t kCircuitFormatVersion = 1;

inline std::vector<std::uint8_t> serialize_circuit(const Circuit& c) {
  io::ByteWriter w;
  w.magic("PCIR");
  w.u32(kCircuitFormatVersion);
  w.u32(static_cast<std::uint32_t>(c.num_nodes()));
  w.u32(static_cast<std::uint32_t>(c.num_edges()));
  w.u32(static_cast<std::uint32_t>(c.num_variables()));
  w.u32(static_cast<std::uint32_t>(c.num_categories()));
  w.u32(c.root());
  for (NodeId n = 0; n < c.num_nodes(); ++n) {
    w.u8(static_cast<std::uint8_t>(c.type(n)));
    w.u32(c.is_input(n) ? c.variable(n) : kNone);
    w.u32(c.tie_group(n));
    w.u32(static_cast<std::uint32_t>(c.children(n).size()));
  }
  for (NodeId ch : c.all_children()) w.u32(ch);
  for (double p : c.all_edge_params()) w.f64(p);
  for (double p : c.all_leaf_params()) w.f64(p);
  return w.bytes();
}

/// Rebuilds the circuit; `certify_on_load` also validates and layers it.
inline Circuit deserialize_circuit(std::vector<std::uint8_t> bytes, bool certify_on_load = true) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("PCIR");
  std::uint32_t version = r.u32();
  if (version != kCircuitFormatVersion)
    throw Error(ErrorCode::FormatError, "unsupported circuit format version " + std::to_string(version));
  std::uint32_t num_nodes = r.u32(), num_edges = r.u32(), num_vars = r.u32(), num_cats = r.u32(), root = r.u32();

  struct Row {
    NodeType type;
    std::uint32_t variable, tie, count;
  };
  std::vector<Row> rows(num_nodes);
  std::size_t total_children = 0, num_inputs = 0;
  for (auto& row : rows) {
    std::uint8_t t = r.u8();
    if (t > 2) throw Error(ErrorCode::FormatError, "unknown node type " + std::to_string(t));
    row = {static_cast<NodeType>(t), r.u32(), r.u32(), r.u32()};
    total_children += row.count;
    if (row.type == NodeType::Input) {
      ++num_inputs;
      if (row.count != 0) throw Error(ErrorCode::FormatError, "input node with children");
    }
  }
  if (total_children != num_edges) throw Error(ErrorCode::FormatError, "edge count mismatch");
  std::vector<NodeId> children(num_edges);
  for (auto& ch : children) ch = r.u32();
  std::vector<double> edge_params(num_edges);
  for (auto& p : edge_params) p = r.f64();
  std::vector<double> leaf_params(num_inputs * num_cats);
  for (auto& p : leaf_params) p = r.f64();
  if (!r.at_end()) throw Error(ErrorCode::FormatError, "trailing bytes after parameter array");

  CircuitBuilder b(num_vars, num_cats);
  std::size_t edge = 0, leaf = 0;
  for (const auto& row : rows) {
    switch (row.type) {
      case NodeType::Input:
        b.add_input(row.variable, {leaf_params.begin() + static_cast<std::ptrdiff_t>(leaf),
                                   leaf_params.begin() + static_cast<std::ptrdiff_t>(leaf + num_cats)},
                    row.tie);
        leaf += num_cats;
        break;
      case NodeType::Product:
        b.add_product({children.begin() + static_cast<std::ptrdiff_t>(edge),
                       children.begin() + static_cast<std::ptrdiff_t>(edge + row.count)},
                      row.tie);
        edge += row.count;
        break;
      case NodeType::Sum:
        b.add_sum({children.begin() + static_cast<std::ptrdiff_t>(edge),
                   children.begin() + static_cast<std::ptrdiff_t>(edge + row.count)},
                  {edge_params.begin() + static_cast<std::ptrdiff_t>(edge),
                   edge_params.begin() + static_cast<std::ptrdiff_t>(edge + row.count)},
                  row.tie);
        edge += row.count;
        break;
    }
  }
  b.set_root(root);
  Circuit c = b.build();
  return certify_on_load ? certify(std::move(c)) : c;
}

inline void save_circuit(const Circuit& c, const std::string& path) {
  io::write_file(path, serialize_circuit(c));
}

inline Circuit load_circuit(const std::string& path, bool certify_on_load = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_circuit(std::move(bytes), certify_on_load);
}

/// Debug export carrying the same content as the binary file.
inline nlohmann::json circuit_to_json(const Circuit& c) {
  nlohmann::json j;
  j["format"] = "PCIR";
  j["version"] = kCircuitFormatVersion;
  j["num_nodes"] = c.num_nodes();
  j["num_edges"] = c.num_edges();
  j["num_variables"] = c.num_variables();
  j["num_categories"] = c.num_categories();
  j["root"] = c.root();
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (NodeId n = 0; n < c.num_nodes(); ++n) {
    nlohmann::json node{{"id", n}, {"type", to_string(c.type(n))}};
    if (c.tie_group(n) != kNone) node["tie"] = c.tie_group(n);
    if (c.is_input(n)) {
      node["variable"] = c.variable(n);
      auto p = c.leaf_params(n);
      node["probs"] = std::vector<double>(p.begin(), p.end());
    } else {
      auto kids = c.children(n);
      node["children"] = std::vector<NodeId>(kids.begin(), kids.end());
      if (c.is_sum(n)) {
        auto w = c.edge_params(n);
        node["weights"] = std::vector<double>(w.begin(), w.end());
      }
    }
    nodes.push_back(std::move(node));
  }
  return j;
}

}  // namespace pcg

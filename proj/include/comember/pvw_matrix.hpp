#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "comember/core.hpp"

namespace comember {

// Symmetric co-membership probabilities. Entries not set explicitly fall
// back to a per-degree-sum table (pairs with no edge and no common neighbor
// depend only on deg(v)+deg(w); negative table slots are unused) and finally
// to a scalar default.
class PvwMatrix {
 public:
  static constexpr std::size_t kDenseLimit = 2048;

  PvwMatrix() = default;
  explicit PvwMatrix(std::size_t n, double default_value = 0.0) : n_(n), default_(default_value) {
    if (n_ <= kDenseLimit) dense_.assign(pair_count(n_), std::numeric_limits<double>::quiet_NaN());
  }

  std::size_t node_count() const { return n_; }
  bool dense() const { return n_ <= kDenseLimit; }
  double default_value() const { return default_; }

  void set(NodeId v, NodeId w, double p) {
    if (v == w) throw Error("pvw: diagonal entries are fixed at 1");
    if (dense()) {
      double& slot = dense_[pair_index(n_, v, w)];
      if (std::isnan(slot)) ++explicit_;
      slot = p;
    } else {
      auto [it, fresh] = sparse_.insert_or_assign(pair_key(v, w), p);
      if (fresh) ++explicit_;
    }
  }

  bool has(NodeId v, NodeId w) const {
    if (v == w) return true;
    if (dense()) return !std::isnan(dense_[pair_index(n_, v, w)]);
    return sparse_.count(pair_key(v, w)) > 0;
  }

  double operator()(NodeId v, NodeId w) const {
    if (v == w) return 1.0;
    if (dense()) {
      double x = dense_[pair_index(n_, v, w)];
      if (!std::isnan(x)) return x;
    } else {
      auto it = sparse_.find(pair_key(v, w));
      if (it != sparse_.end()) return it->second;
    }
    return fallback(v, w);
  }

  void set_degree_fallback(std::vector<std::uint32_t> degrees, std::vector<double> by_degree_sum) {
    if (degrees.size() != n_) throw Error("pvw: degree vector size mismatch");
    degrees_ = std::move(degrees);
    by_sum_ = std::move(by_degree_sum);
  }
  bool has_degree_fallback() const { return !degrees_.empty(); }
  const std::vector<double>& degree_sum_table() const { return by_sum_; }

  std::size_t explicit_count() const { return explicit_; }

  template <typename F>
  void for_each_explicit(F&& f) const {
    if (dense()) {
      std::size_t k = 0;
      for (NodeId v = 0; v < n_; ++v)
        for (NodeId w = v + 1; w < n_; ++w, ++k)
          if (!std::isnan(dense_[k])) f(v, w, dense_[k]);
    } else {
      for (const auto& [key, p] : sparse_) f(static_cast<NodeId>(key >> 32), static_cast<NodeId>(key & 0xffffffffu), p);
    }
  }

  nlohmann::json metadata = nlohmann::json::object();

  // One JSON header line, then little-endian (u32 v, u32 w, f64 p) records.
  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    nlohmann::json h;
    h["format"] = "comember-pvw-v1";
    h["n"] = n_;
    h["default"] = default_;
    h["count"] = explicit_;
    h["metadata"] = metadata;
    if (has_degree_fallback()) {
      h["degrees"] = degrees_;
      h["fallback_by_degree_sum"] = by_sum_;
    }
    out << h.dump() << '\n';
    std::vector<std::pair<std::uint64_t, double>> rows;
    rows.reserve(explicit_);
    for_each_explicit([&](NodeId v, NodeId w, double p) { rows.emplace_back(pair_key(v, w), p); });
    std::sort(rows.begin(), rows.end());
    for (const auto& [key, p] : rows) {
      std::uint32_t vw[2] = {static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key & 0xffffffffu)};
      char buf[16];
      std::memcpy(buf, vw, 8);
      std::memcpy(buf + 8, &p, 8);
      out.write(buf, 16);
    }
    if (!out) throw Error("write failed: " + path);
  }

  static PvwMatrix read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::string line;
    std::getline(in, line);
    auto h = nlohmann::json::parse(line);
    if (h.value("format", "") != "comember-pvw-v1") throw Error("not a pvw matrix file: " + path);
    PvwMatrix m(h["n"].get<std::size_t>(), h["default"].get<double>());
    m.metadata = h["metadata"];
    if (h.contains("degrees"))
      m.set_degree_fallback(h["degrees"].get<std::vector<std::uint32_t>>(),
                            h["fallback_by_degree_sum"].get<std::vector<double>>());
    std::size_t count = h["count"].get<std::size_t>();
    char buf[16];
    for (std::size_t k = 0; k < count; ++k) {
      if (!in.read(buf, 16)) throw Error("truncated pvw matrix file: " + path);
      std::uint32_t vw[2];
      double p;
      std::memcpy(vw, buf, 8);
      std::memcpy(&p, buf + 8, 8);
      m.set(vw[0], vw[1], p);
    }
    return m;
  }

 private:
  double fallback(NodeId v, NodeId w) const {
    if (!degrees_.empty()) {
      std::size_t s = degrees_[v] + degrees_[w];
      if (s < by_sum_.size() && by_sum_[s] >= 0) return by_sum_[s];
    }
    return default_;
  }

  std::size_t n_ = 0;
  double default_ = 0.0;
  std::size_t explicit_ = 0;
  std::vector<double> dense_;
  std::unordered_map<std::uint64_t, double> sparse_;
  std::vector<std::uint32_t> degrees_;
  std::vector<double> by_sum_;
};

}  // namespace comember

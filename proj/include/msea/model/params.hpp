#pragma once

#include <concepts>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "msea/error.hpp"
#include "msea/model/config.hpp"
#include "msea/numerics/tensor.hpp"

namespace msea::model {

using num::Shape;
using num::Tensor;

/// Every learned tensor of the model, keyed by its symbol name and kept in a fixed
/// allocation order (the order used by the optimizer and checkpoints).
///
/// GRU cells expand to three entries, e.g. "GRU^d.W_u", "GRU^d.W_r", "GRU^d.W_h".
template <std::floating_point T>
class ModelParams {
 public:
  ModelParams() = default;

  /// Allocates the parameters `cfg` needs; values are zero until initialize().
  explicit ModelParams(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t V = cfg.vocab_size, e = cfg.embedding, hm = cfg.hidden_master, hs = cfg.hidden_slave,
                      hd = cfg.hidden_decoder, dc = cfg.content, at = cfg.attention, src = cfg.source_width();

    add("E", {V, e});
    add_gru("GRU^p_fwd", e, hm);
    add_gru("GRU^p_bwd", e, hm);
    add("P_0", {hd, src});
    add("v_a", Shape{at});
    add("W_a", {at, hd});
    add("U_a", {at, src});
    if (cfg.coverage) add("W_c", Shape{at});
    add_gru("GRU^d", e, hd);
    add("W_v", {V, hd + src});
    add("b_v", Shape{V});
    if (cfg.pointer) {
      add("omega_c", Shape{src});
      add("omega_h", Shape{hd});
      add("omega_y", Shape{e});
      if (cfg.slave) add("omega_d", Shape{dc});
      add("b_g", Shape::scalar());
    }
    if (cfg.slave) {
      add("W_p", {dc, src});
      add("b_p", Shape{dc});
      if (cfg.claims_encoder()) {
        add_gru("GRU^q_fwd", e, hm);
        add_gru("GRU^q_bwd", e, hm);
        add("W_q", {dc, src});
        add("b_q", Shape{dc});
      }
      add("W_1", {hs, src + 3 * dc});
      add("b_1", Shape{hs});
      add("W_2", Shape{hs});
      add("b_2", Shape::scalar());
      add("W_s", {src, dc});
      if (cfg.untie_ws) add("W_s'", {src, dc});
      add("W_r", {dc, dc});
      add("W_k", Shape{dc});
      add_gru("GRU^s", e, hs);
      add("P_f", {hd, hd + hs});
      add("W_d", {dc, cfg.cd_from_source ? src : hd});
      add("b_d", Shape{dc});
    }
  }

  /// Uniform draw in [-range, range] for every entry, in allocation order.
  void initialize(std::uint64_t seed, double range) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-range, range);
    for (const auto& name : names_) {
      for (T& v : tensors_.at(name).data()) v = static_cast<T>(dist(rng));
    }
  }

  [[nodiscard]] bool contains(const std::string& name) const { return tensors_.contains(name); }

  Tensor<T>& operator[](const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ConfigError("model has no parameter named " + name);
    return it->second;
  }
  const Tensor<T>& operator[](const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ConfigError("model has no parameter named " + name);
    return it->second;
  }

  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }

  /// Pointers in allocation order, for the optimizer and gradient checks.
  std::vector<Tensor<T>*> tensors() {
    std::vector<Tensor<T>*> out;
    for (const auto& n : names_) out.push_back(&tensors_.at(n));
    return out;
  }

  /// Pointers for the parameters whose names start with any of `prefixes`.
  std::vector<Tensor<T>*> group(std::initializer_list<std::string> prefixes) {
    std::vector<Tensor<T>*> out;
    for (const auto& n : names_) {
      for (const auto& p : prefixes) {
        if (n.rfind(p, 0) == 0) {
          out.push_back(&tensors_.at(n));
          break;
        }
      }
    }
    return out;
  }

  [[nodiscard]] std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.size();
    return n;
  }

  void enable_grad() {
    for (auto& [_, t] : tensors_) t.enable_grad();
  }
  void zero_grad() {
    for (auto& [_, t] : tensors_) t.zero_grad();
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

  /// Inserts a tensor under a new name (used when loading checkpoints).
  void add_tensor(const std::string& name, Tensor<T> t) {
    if (!tensors_.emplace(name, std::move(t)).second) throw FormatError("duplicate parameter " + name);
    names_.push_back(name);
  }

 private:
  void add(const std::string& name, Shape shape) { add_tensor(name, Tensor<T>(shape)); }
  void add_gru(const std::string& prefix, std::size_t input, std::size_t hidden) {
    for (const char* gate : {".W_u", ".W_r", ".W_h"}) add(prefix + gate, {hidden, input + hidden});
  }

  std::vector<std::string> names_;
  std::map<std::string, Tensor<T>> tensors_;
};

}  // namespace msea::model

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "reticgen/autodiff.hpp"

namespace reticgen {

enum class TokenKind { node, edge };

std::string_view to_string(TokenKind kind);

struct BuildingBlock {
  std::string id;
  TokenKind kind = TokenKind::node;
  double mass = 0.0;     // g/mol per formula unit
  double surface = 0.0;  // Å² per formula unit
};

// Building-block vocabulary. Text format, one block per line after the
// schema header:
//
//   schema reticgen-vocabulary 1
//   N577 node 612.5 980.0
//   E5   edge 150.1 210.0
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<BuildingBlock> blocks);

  static Vocabulary parse(std::string_view text, const std::string& source = "<vocabulary>");
  static Vocabulary load(const std::string& path);

  std::size_t size() const { return blocks_.size(); }
  const BuildingBlock& operator[](std::size_t i) const { return blocks_[i]; }
  const std::vector<BuildingBlock>& blocks() const { return blocks_; }
  std::optional<int> find(std::string_view id) const;
  int index_of(std::string_view id) const;  // throws ValidationError
  std::string canonical_text() const;

 private:
  std::vector<BuildingBlock> blocks_;
  std::unordered_map<std::string, int> index_;
};

struct Slot {
  TokenKind kind = TokenKind::node;
  std::vector<int> compatible;  // vocabulary indices, in file order
};

// Slot layout of one topology. Text format:
//
//   schema reticgen-topology 1
//   name ffc
//   edges true
//   node N577 N12 N45
//   edge E5 E1
//
// Node slots must all precede edge slots.
struct Topology {
  std::string name;
  std::vector<Slot> node_slots;
  std::vector<Slot> edge_slots;
  bool edges_enabled = true;

  static Topology parse(std::string_view text, const Vocabulary& vocabulary,
                        const std::string& source = "<topology>");
  static Topology load(const std::string& path, const Vocabulary& vocabulary);

  // Node slots, then edge slots when enabled.
  std::vector<const Slot*> active_slots() const;
  std::string canonical_text(const Vocabulary& vocabulary) const;
};

struct AssemblyState {
  std::vector<int> tokens;

  friend bool operator==(const AssemblyState&, const AssemblyState&) = default;
};

struct Trajectory {
  std::vector<int> actions;
  std::vector<double> forward_log_probs;
  double reward = 0.0;

  std::vector<AssemblyState> states() const;  // s0 .. sn, prefixes of actions
};

// The append-only assembly process over one topology. Immutable once built;
// safe to share across sampling threads.
class AssemblyEnv {
 public:
  AssemblyEnv(Vocabulary vocabulary, Topology topology);

  const Vocabulary& vocabulary() const { return vocabulary_; }
  const Topology& topology() const { return topology_; }
  std::size_t vocab_size() const { return vocabulary_.size(); }
  std::size_t slot_count() const { return slots_.size(); }
  const Slot& slot(std::size_t i) const { return slots_[i]; }

  AssemblyState initial_state() const { return {}; }
  bool is_terminal(const AssemblyState& state) const { return state.tokens.size() == slots_.size(); }
  ActionMask valid_actions(const AssemblyState& state) const;
  AssemblyState step(const AssemblyState& state, int action) const;

  // Product of compatible-set sizes over active slots, as a double so it can
  // report counts far beyond the enumeration bound.
  double terminal_count() const;
  std::vector<std::vector<int>> enumerate_terminals(double bound = 1e6) const;

  // "ffc:N577,N238,N194,E5,E3,E74"
  std::string to_record(const std::vector<int>& sequence) const;
  std::vector<int> parse_record(std::string_view record) const;

  // Checks the three assembly constraints from scratch (length, slot order by
  // kind, per-slot compatibility). Empty result means valid.
  std::optional<std::string> check_sequence(const std::vector<int>& sequence) const;

  // Stable fingerprint of the vocabulary, topology and edge mode.
  std::uint64_t fingerprint() const;

 private:
  Vocabulary vocabulary_;
  Topology topology_;
  std::vector<Slot> slots_;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace reticgen

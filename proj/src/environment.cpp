#include "reticgen/environment.hpp"

#include <algorithm>
#include <sstream>

#include "reticgen/error.hpp"
#include "reticgen/text.hpp"

namespace reticgen {

namespace {

constexpr std::string_view kVocabularySchema = "reticgen-vocabulary";
constexpr std::string_view kTopologySchema = "reticgen-topology";

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& message) {
  throw ValidationError(source + ":" + std::to_string(line) + ": " + message);
}

bool skippable(std::string_view line) {
  line = text::trim(line);
  return line.empty() || line.front() == '#';
}

void expect_schema(std::string_view line, std::string_view schema, const std::string& source, std::size_t lineno) {
  const auto fields = text::split_whitespace(line);
  if (fields.size() != 3 || fields[0] != "schema" || fields[1] != schema) {
    fail_at(source, lineno, "expected header 'schema " + std::string(schema) + " 1'");
  }
  if (fields[2] != "1") fail_at(source, lineno, "unsupported schema version '" + std::string(fields[2]) + "'");
}

}  // namespace

std::string_view to_string(TokenKind kind) { return kind == TokenKind::node ? "node" : "edge"; }

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Vocabulary::Vocabulary(std::vector<BuildingBlock> blocks) : blocks_(std::move(blocks)) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    const char prefix = b.kind == TokenKind::node ? 'N' : 'E';
    if (b.id.empty() || b.id.front() != prefix) {
      throw ValidationError("block '" + b.id + "': " + std::string(to_string(b.kind)) +
                            " identifiers must start with '" + prefix + "'");
    }
    if (!(b.mass > 0.0)) throw ValidationError("block '" + b.id + "': mass must be positive");
    if (!(b.surface >= 0.0)) throw ValidationError("block '" + b.id + "': surface must be non-negative");
    if (!index_.emplace(b.id, static_cast<int>(i)).second) {
      throw ValidationError("block '" + b.id + "' is defined twice");
    }
  }
}

Vocabulary Vocabulary::parse(std::string_view body, const std::string& source) {
  std::vector<BuildingBlock> blocks;
  std::unordered_map<std::string, std::size_t> seen;
  bool header = false;
  const auto all = text::lines(body);
  for (std::size_t n = 0; n < all.size(); ++n) {
    const std::size_t lineno = n + 1;
    if (skippable(all[n])) continue;
    if (!header) {
      expect_schema(all[n], kVocabularySchema, source, lineno);
      header = true;
      continue;
    }
    const auto f = text::split_whitespace(all[n]);
    if (f.size() != 4) fail_at(source, lineno, "expected '<id> <node|edge> <mass> <surface>'");
    BuildingBlock b;
    b.id = std::string(f[0]);
    if (f[1] == "node") {
      b.kind = TokenKind::node;
    } else if (f[1] == "edge") {
      b.kind = TokenKind::edge;
    } else {
      fail_at(source, lineno, "kind must be 'node' or 'edge', got '" + std::string(f[1]) + "'");
    }
    const auto mass = text::parse_double(f[2]);
    const auto surface = text::parse_double(f[3]);
    if (!mass) fail_at(source, lineno, "unparseable mass '" + std::string(f[2]) + "'");
    if (!surface) fail_at(source, lineno, "unparseable surface '" + std::string(f[3]) + "'");
    b.mass = *mass;
    b.surface = *surface;
    if (auto it = seen.find(b.id); it != seen.end()) {
      fail_at(source, lineno, "duplicate identifier '" + b.id + "' (first on line " + std::to_string(it->second) + ")");
    }
    seen.emplace(b.id, lineno);
    try {
      Vocabulary probe({b});
    } catch (const ValidationError& e) {
      fail_at(source, lineno, e.what());
    }
    blocks.push_back(std::move(b));
  }
  if (!header) fail_at(source, 1, "missing schema header");
  if (blocks.empty()) fail_at(source, all.size(), "vocabulary is empty");
  return Vocabulary(std::move(blocks));
}

Vocabulary Vocabulary::load(const std::string& path) { return parse(text::read_file(path), path); }

std::optional<int> Vocabulary::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw ValidationError("unknown building block '" + std::string(id) + "'");
}

std::string Vocabulary::canonical_text() const {
  std::ostringstream out;
  out << "schema " << kVocabularySchema << " 1\n";
  for (const auto& b : blocks_) {
    out << b.id << ' ' << to_string(b.kind) << ' ' << text::format_double(b.mass) << ' '
        << text::format_double(b.surface) << '\n';
  }
  return out.str();
}

Topology Topology::parse(std::string_view body, const Vocabulary& vocabulary, const std::string& source) {
  Topology topo;
  bool header = false, have_name = false, have_edges = false;
  const auto all = text::lines(body);
  for (std::size_t n = 0; n < all.size(); ++n) {
    const std::size_t lineno = n + 1;
    if (skippable(all[n])) continue;
    if (!header) {
      expect_schema(all[n], kTopologySchema, source, lineno);
      header = true;
      continue;
    }
    const auto f = text::split_whitespace(all[n]);
    const std::string_view key = f[0];
    if (key == "name") {
      if (f.size() != 2) fail_at(source, lineno, "expected 'name <code>'");
      topo.name = text::lowercase(f[1]);
      if (topo.name.find_first_of(":,") != std::string::npos) {
        fail_at(source, lineno, "topology name may not contain ':' or ','");
      }
      have_name = true;
    } else if (key == "edges") {
      const auto v = f.size() == 2 ? text::parse_bool(f[1]) : std::nullopt;
      if (!v) fail_at(source, lineno, "expected 'edges true|false'");
      topo.edges_enabled = *v;
      have_edges = true;
    } else if (key == "node" || key == "edge") {
      Slot slot;
      slot.kind = key == "node" ? TokenKind::node : TokenKind::edge;
      if (slot.kind == TokenKind::node && !topo.edge_slots.empty()) {
        fail_at(source, lineno, "node slots must precede all edge slots");
      }
      if (f.size() < 2) fail_at(source, lineno, "slot has an empty compatible set");
      for (std::size_t i = 1; i < f.size(); ++i) {
        const auto idx = vocabulary.find(f[i]);
        if (!idx) fail_at(source, lineno, "unknown building block '" + std::string(f[i]) + "'");
        if (vocabulary[*idx].kind != slot.kind) {
          fail_at(source, lineno, "building block '" + std::string(f[i]) + "' is not a " +
                                      std::string(to_string(slot.kind)));
        }
        for (int existing : slot.compatible) {
          if (existing == *idx) fail_at(source, lineno, "building block '" + std::string(f[i]) + "' listed twice");
        }
        slot.compatible.push_back(*idx);
      }
      (slot.kind == TokenKind::node ? topo.node_slots : topo.edge_slots).push_back(std::move(slot));
    } else {
      fail_at(source, lineno, "unknown key '" + std::string(key) + "'");
    }
  }
  if (!header) fail_at(source, 1, "missing schema header");
  if (!have_name) fail_at(source, all.size(), "missing 'name'");
  if (!have_edges) fail_at(source, all.size(), "missing 'edges'");
  if (topo.active_slots().empty()) fail_at(source, all.size(), "topology has no active slots");
  return topo;
}

Topology Topology::load(const std::string& path, const Vocabulary& vocabulary) {
  return parse(text::read_file(path), vocabulary, path);
}

std::vector<const Slot*> Topology::active_slots() const {
  std::vector<const Slot*> out;
  for (const auto& s : node_slots) out.push_back(&s);
  if (edges_enabled) {
    for (const auto& s : edge_slots) out.push_back(&s);
  }
  return out;
}

std::string Topology::canonical_text(const Vocabulary& vocabulary) const {
  std::ostringstream out;
  out << "schema " << kTopologySchema << " 1\nname " << name << "\nedges " << (edges_enabled ? "true" : "false")
      << '\n';
  for (const auto* group : {&node_slots, &edge_slots}) {
    for (const auto& slot : *group) {
      out << to_string(slot.kind);
      for (int i : slot.compatible) out << ' ' << vocabulary[static_cast<std::size_t>(i)].id;
      out << '\n';
    }
  }
  return out.str();
}

std::vector<AssemblyState> Trajectory::states() const {
  std::vector<AssemblyState> out(1);
  for (int a : actions) {
    AssemblyState next = out.back();
    next.tokens.push_back(a);
    out.push_back(std::move(next));
  }
  return out;
}

AssemblyEnv::AssemblyEnv(Vocabulary vocabulary, Topology topology)
    : vocabulary_(std::move(vocabulary)), topology_(std::move(topology)) {
  for (const Slot* s : topology_.active_slots()) {
    // Load-time dead-end check: every reachable state needs a valid action.
    if (s->compatible.empty()) throw ValidationError("topology '" + topology_.name + "': empty slot");
    for (int i : s->compatible) {
      if (i < 0 || static_cast<std::size_t>(i) >= vocabulary_.size() ||
          vocabulary_[static_cast<std::size_t>(i)].kind != s->kind) {
        throw ValidationError("topology '" + topology_.name + "': slot holds an incompatible block");
      }
    }
    slots_.push_back(*s);
  }
  if (slots_.empty()) throw ValidationError("topology '" + topology_.name + "' has no active slots");
}

ActionMask AssemblyEnv::valid_actions(const AssemblyState& state) const {
  if (state.tokens.size() >= slots_.size()) throw ContractError("valid_actions: state is terminal");
  ActionMask mask(vocabulary_.size(), false);
  for (int i : slots_[state.tokens.size()].compatible) mask[static_cast<std::size_t>(i)] = true;
  return mask;
}

AssemblyState AssemblyEnv::step(const AssemblyState& state, int action) const {
  if (is_terminal(state)) throw ContractError("step: state is already terminal");
  const Slot& next = slots_[state.tokens.size()];
  bool ok = false;
  for (int i : next.compatible) ok = ok || i == action;
  if (!ok) {
    const std::string name = action >= 0 && static_cast<std::size_t>(action) < vocabulary_.size()
                                 ? vocabulary_[static_cast<std::size_t>(action)].id
                                 : "#" + std::to_string(action);
    throw ContractError("step: '" + name + "' is not allowed in slot " + std::to_string(state.tokens.size()) +
                        " (" + std::string(to_string(next.kind)) + " slot)");
  }
  AssemblyState out = state;
  out.tokens.push_back(action);
  return out;
}

double AssemblyEnv::terminal_count() const {
  double n = 1.0;
  for (const auto& s : slots_) n *= static_cast<double>(s.compatible.size());
  return n;
}

std::vector<std::vector<int>> AssemblyEnv::enumerate_terminals(double bound) const {
  const double count = terminal_count();
  if (count > bound) {
    throw EnumerationLimitError("enumerate_terminals: " + text::format_double(count) +
                                    " terminal states exceed the bound of " + text::format_double(bound),
                                count);
  }
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(count));
  std::vector<std::size_t> digits(slots_.size(), 0);
  for (;;) {
    std::vector<int> seq(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) seq[i] = slots_[i].compatible[digits[i]];
    out.push_back(std::move(seq));
    std::size_t pos = slots_.size();
    while (pos > 0) {
      --pos;
      if (++digits[pos] < slots_[pos].compatible.size()) break;
      digits[pos] = 0;
      if (pos == 0) return out;
    }
  }
}

std::string AssemblyEnv::to_record(const std::vector<int>& sequence) const {
  if (sequence.size() != slots_.size()) {
    throw ContractError("to_record: sequence has " + std::to_string(sequence.size()) + " of " +
                        std::to_string(slots_.size()) + " slots filled");
  }
  std::string out = topology_.name + ":";
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    if (i) out += ',';
    out += vocabulary_[static_cast<std::size_t>(sequence[i])].id;
  }
  return out;
}

std::vector<int> AssemblyEnv::parse_record(std::string_view record) const {
  record = text::trim(record);
  const auto colon = record.find(':');
  if (colon == std::string_view::npos) throw ValidationError("assembly record lacks a topology prefix");
  if (text::lowercase(record.substr(0, colon)) != topology_.name) {
    throw ValidationError("assembly record topology '" + std::string(record.substr(0, colon)) +
                          "' does not match '" + topology_.name + "'");
  }
  std::vector<int> seq;
  for (auto id : text::split(record.substr(colon + 1), ',')) seq.push_back(vocabulary_.index_of(text::trim(id)));
  if (auto problem = check_sequence(seq)) throw ValidationError("assembly record: " + *problem);
  return seq;
}

std::optional<std::string> AssemblyEnv::check_sequence(const std::vector<int>& sequence) const {
  const auto active = topology_.active_slots();
  if (sequence.size() != active.size()) {
    return "expected " + std::to_string(active.size()) + " building blocks, got " + std::to_string(sequence.size());
  }
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const int token = sequence[i];
    if (token < 0 || static_cast<std::size_t>(token) >= vocabulary_.size()) {
      return "position " + std::to_string(i) + " holds an unknown token";
    }
    const bool want_node = i < topology_.node_slots.size();
    const auto kind = vocabulary_[static_cast<std::size_t>(token)].kind;
    if ((kind == TokenKind::node) != want_node) {
      return "position " + std::to_string(i) + " holds a " + std::string(to_string(kind)) + " out of order";
    }
    const auto& compat = active[i]->compatible;
    if (std::find(compat.begin(), compat.end(), token) == compat.end()) {
      return "position " + std::to_string(i) + " holds incompatible block '" +
             vocabulary_[static_cast<std::size_t>(token)].id + "'";
    }
  }
  return std::nullopt;
}

std::uint64_t AssemblyEnv::fingerprint() const {
  return fnv1a64(vocabulary_.canonical_text() + "\n--\n" + topology_.canonical_text(vocabulary_));
}

}  // namespace reticgen

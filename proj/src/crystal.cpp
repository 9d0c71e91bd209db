#include "reticgen/crystal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <queue>

#include "reticgen/error.hpp"
#include "reticgen/text.hpp"

namespace reticgen::crystal {

namespace {

double cos_deg(double deg) { return deg == 90.0 ? 0.0 : std::cos(deg * std::numbers::pi / 180.0); }
double sin_deg(double deg) { return deg == 90.0 ? 1.0 : std::sin(deg * std::numbers::pi / 180.0); }

Mat3 inverse(const Mat3& m) {
  const double det = determinant(m);
  Mat3 inv{};
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

double reduce_unit(double f) {
  double r = f - std::floor(f);
  if (r >= 1.0) r = 0.0;
  return r;
}

}  // namespace

Mat3 cell_basis(const CellParameters& p) {
  const double ca = cos_deg(p.alpha), cb = cos_deg(p.beta), cg = cos_deg(p.gamma);
  const double sg = sin_deg(p.gamma);
  const double cy = (ca - cb * cg) / sg;
  const double cz2 = 1.0 - cb * cb - cy * cy;
  if (!(cz2 > 0.0)) throw DegenerateInputError("cell angles do not form a valid cell");
  Mat3 m{};
  m[0] = {p.a, 0.0, 0.0};
  m[1] = {p.b * cg, p.b * sg, 0.0};
  m[2] = {p.c * cb, p.c * cy, p.c * std::sqrt(cz2)};
  return m;
}

double determinant(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

void PeriodicPointSet::normalize() {
  if (!(std::abs(determinant(basis)) > 1e-6)) throw DegenerateInputError("cell basis is singular");
  if (motif.empty()) throw DegenerateInputError("motif is empty");
  for (auto& f : motif) {
    for (double& x : f) {
      if (!std::isfinite(x)) throw DegenerateInputError("non-finite fractional coordinate");
      x = reduce_unit(x);
    }
  }
  species.resize(motif.size());
}

Vec3 PeriodicPointSet::to_cartesian(const Vec3& f) const {
  Vec3 out{};
  for (int j = 0; j < 3; ++j) out[j] = f[0] * basis[0][j] + f[1] * basis[1][j] + f[2] * basis[2][j];
  return out;
}

// ---- CIF ----------------------------------------------------------------

namespace {

struct Token {
  std::string text;
  std::size_t line;
  bool quoted = false;
};

[[noreturn]] void cif_fail(const std::string& source, std::size_t line, const std::string& msg) {
  throw ValidationError(source + ":" + std::to_string(line) + ": " + msg);
}

std::vector<Token> tokenize(std::string_view body, const std::string& source) {
  std::vector<Token> out;
  const auto all = text::lines(body);
  for (std::size_t n = 0; n < all.size(); ++n) {
    const std::string_view line = all[n];
    const std::size_t lineno = n + 1;
    if (!line.empty() && line.front() == ';') {
      cif_fail(source, lineno, "multi-line text fields are not supported");
    }
    std::size_t i = 0;
    while (i < line.size()) {
      const char c = line[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (c == '#') break;
      if (c == '\'' || c == '"') {
        // Closing quote must be followed by whitespace or end of line.
        std::size_t j = i + 1;
        while (j < line.size() &&
               !(line[j] == c && (j + 1 == line.size() || std::isspace(static_cast<unsigned char>(line[j + 1]))))) {
          ++j;
        }
        if (j >= line.size()) cif_fail(source, lineno, "unterminated quoted value");
        out.push_back({std::string(line.substr(i + 1, j - i - 1)), lineno, true});
        i = j + 1;
        continue;
      }
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      out.push_back({std::string(line.substr(i, j - i)), lineno, false});
      i = j;
    }
  }
  return out;
}

bool is_tag(const Token& t) { return !t.quoted && !t.text.empty() && t.text.front() == '_'; }
bool is_keyword(const Token& t, std::string_view prefix) {
  return !t.quoted && text::lowercase(t.text).rfind(prefix, 0) == 0;
}

// Strips a standard uncertainty suffix: "10.234(5)" -> 10.234.
std::optional<double> cif_number(const std::string& raw) {
  std::string_view v = raw;
  if (auto p = v.find('('); p != std::string_view::npos) {
    if (v.back() != ')') return std::nullopt;
    v = v.substr(0, p);
  }
  return text::parse_double(v);
}

std::string squash(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '\'' && c != '"') {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  return out;
}

struct Loop {
  std::vector<std::string> tags;
  std::vector<Token> values;
  std::size_t line = 0;
};

}  // namespace

PeriodicPointSet parse_cif(std::string_view body, const std::string& source) {
  const auto tokens = tokenize(body, source);
  std::map<std::string, Token> items;
  std::vector<Loop> loops;

  for (std::size_t i = 0; i < tokens.size();) {
    const Token& t = tokens[i];
    if (is_keyword(t, "data_") || is_keyword(t, "global_")) {
      ++i;
      continue;
    }
    if (is_keyword(t, "loop_")) {
      Loop loop;
      loop.line = t.line;
      ++i;
      while (i < tokens.size() && is_tag(tokens[i])) loop.tags.push_back(text::lowercase(tokens[i++].text));
      if (loop.tags.empty()) cif_fail(source, t.line, "loop_ without tags");
      while (i < tokens.size() && !is_tag(tokens[i]) && !is_keyword(tokens[i], "loop_") &&
             !is_keyword(tokens[i], "data_")) {
        loop.values.push_back(tokens[i++]);
      }
      if (loop.values.size() % loop.tags.size() != 0) {
        cif_fail(source, loop.line, "loop value count " + std::to_string(loop.values.size()) +
                                        " is not a multiple of its " + std::to_string(loop.tags.size()) + " tags");
      }
      loops.push_back(std::move(loop));
      continue;
    }
    if (is_tag(t)) {
      if (i + 1 >= tokens.size() || is_tag(tokens[i + 1]) || is_keyword(tokens[i + 1], "loop_")) {
        cif_fail(source, t.line, "tag " + t.text + " has no value");
      }
      items[text::lowercase(t.text)] = tokens[i + 1];
      i += 2;
      continue;
    }
    cif_fail(source, t.line, "unexpected value '" + t.text + "'");
  }

  // Symmetry: only P1 / identity.
  for (const char* tag : {"_symmetry_space_group_name_h-m", "_space_group_name_h-m_alt", "_space_group_name_hall",
                          "_symmetry_space_group_name_hall"}) {
    if (auto it = items.find(tag); it != items.end()) {
      const std::string s = squash(it->second.text);
      if (s != "p1" && s != "?" && s != ".") {
        cif_fail(source, it->second.line, "space group '" + it->second.text + "' is not P1; only P1 files are supported");
      }
    }
  }
  for (const char* tag : {"_symmetry_int_tables_number", "_space_group_it_number"}) {
    if (auto it = items.find(tag); it != items.end() && it->second.text != "1") {
      cif_fail(source, it->second.line, "space group number " + it->second.text + " is not 1 (P1)");
    }
  }
  auto check_ops = [&](const std::vector<Token>& ops) {
    for (const auto& op : ops) {
      if (squash(op.text) != "x,y,z") {
        cif_fail(source, op.line, "symmetry operation '" + op.text + "' is not the identity; only P1 is supported");
      }
    }
  };
  for (const auto& loop : loops) {
    for (std::size_t c = 0; c < loop.tags.size(); ++c) {
      const auto& tag = loop.tags[c];
      if (tag == "_symmetry_equiv_pos_as_xyz" || tag == "_space_group_symop_operation_xyz") {
        std::vector<Token> ops;
        for (std::size_t r = c; r < loop.values.size(); r += loop.tags.size()) ops.push_back(loop.values[r]);
        check_ops(ops);
      }
    }
  }
  for (const char* tag : {"_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz"}) {
    if (auto it = items.find(tag); it != items.end()) check_ops({it->second});
  }

  CellParameters cell;
  const std::size_t last_line = tokens.empty() ? 1 : tokens.back().line;
  auto number = [&](const char* tag, double& into) {
    auto it = items.find(tag);
    if (it == items.end()) cif_fail(source, last_line, std::string("missing cell parameter ") + tag);
    const auto v = cif_number(it->second.text);
    if (!v || !std::isfinite(*v)) cif_fail(source, it->second.line, std::string("unparseable value for ") + tag);
    into = *v;
  };
  number("_cell_length_a", cell.a);
  number("_cell_length_b", cell.b);
  number("_cell_length_c", cell.c);
  number("_cell_angle_alpha", cell.alpha);
  number("_cell_angle_beta", cell.beta);
  number("_cell_angle_gamma", cell.gamma);
  if (!(cell.a > 0 && cell.b > 0 && cell.c > 0)) cif_fail(source, last_line, "cell lengths must be positive");

  const Loop* atoms = nullptr;
  for (const auto& loop : loops) {
    if (std::find(loop.tags.begin(), loop.tags.end(), "_atom_site_fract_x") != loop.tags.end()) atoms = &loop;
  }
  if (!atoms) cif_fail(source, last_line, "no atom-site loop with _atom_site_fract_x/y/z columns");
  auto column = [&](const char* tag) -> std::optional<std::size_t> {
    auto it = std::find(atoms->tags.begin(), atoms->tags.end(), tag);
    if (it == atoms->tags.end()) return std::nullopt;
    return static_cast<std::size_t>(it - atoms->tags.begin());
  };
  const auto cx = column("_atom_site_fract_x"), cy = column("_atom_site_fract_y"), cz = column("_atom_site_fract_z");
  if (!cx || !cy || !cz) {
    std::string missing;
    for (auto [col, tag] : {std::pair{cx, "_atom_site_fract_x"}, {cy, "_atom_site_fract_y"}, {cz, "_atom_site_fract_z"}}) {
      if (!col) missing += std::string(missing.empty() ? "" : ", ") + tag;
    }
    cif_fail(source, atoms->line, "atom-site loop lacks " + missing);
  }
  auto label_col = column("_atom_site_type_symbol");
  if (!label_col) label_col = column("_atom_site_label");

  PeriodicPointSet set;
  try {
    set.basis = cell_basis(cell);
  } catch (const DegenerateInputError& e) {
    cif_fail(source, items.at("_cell_angle_alpha").line, e.what());
  }
  const std::size_t width = atoms->tags.size();
  for (std::size_t r = 0; r < atoms->values.size(); r += width) {
    Vec3 f{};
    std::size_t idx = 0;
    for (auto col : {*cx, *cy, *cz}) {
      const Token& tok = atoms->values[r + col];
      const auto v = cif_number(tok.text);
      if (!v || !std::isfinite(*v)) cif_fail(source, tok.line, "unparseable fractional coordinate '" + tok.text + "'");
      f[idx++] = *v;
    }
    set.motif.push_back(f);
    set.species.push_back(label_col ? atoms->values[r + *label_col].text : std::string());
  }
  if (set.motif.empty()) cif_fail(source, atoms->line, "atom-site loop is empty");
  try {
    set.normalize();
  } catch (const DegenerateInputError& e) {
    cif_fail(source, atoms->line, e.what());
  }
  return set;
}

PeriodicPointSet load_cif(const std::string& path) { return parse_cif(text::read_file(path), path); }

// ---- neighbours ----------------------------------------------------------

NeighborDistances kth_nearest_distances(const PeriodicPointSet& set, std::size_t k, int extra_shells) {
  if (k == 0) throw ContractError("kth_nearest_distances: k must be at least 1");
  if (extra_shells < 0) throw ContractError("kth_nearest_distances: extra_shells must be non-negative");
  if (!(std::abs(determinant(set.basis)) > 1e-6)) throw DegenerateInputError("cell basis is singular");
  if (set.motif.empty()) throw DegenerateInputError("motif is empty");

  // Fractional coordinate i of a displacement x is x . (column i of B^-1),
  // so |x| >= |df_i| / |column i|.
  const Mat3 inv = inverse(set.basis);
  double min_spacing = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double norm = std::sqrt(inv[0][i] * inv[0][i] + inv[1][i] * inv[1][i] + inv[2][i] * inv[2][i]);
    min_spacing = std::min(min_spacing, 1.0 / norm);
  }

  NeighborDistances out;
  out.per_point.resize(set.motif.size());
  const std::size_t m = set.motif.size();
  for (std::size_t p = 0; p < m; ++p) {
    std::priority_queue<double> best;  // max-heap of the k smallest
    auto offer = [&](double d) {
      if (best.size() < k) {
        best.push(d);
      } else if (d < best.top()) {
        best.pop();
        best.push(d);
      }
    };
    auto visit_shell = [&](int r) {
      for (int i = -r; i <= r; ++i) {
        for (int j = -r; j <= r; ++j) {
          for (int l = -r; l <= r; ++l) {
            if (std::max({std::abs(i), std::abs(j), std::abs(l)}) != r) continue;
            for (std::size_t q = 0; q < m; ++q) {
              if (r == 0 && q == p) continue;
              const Vec3 df{set.motif[q][0] - set.motif[p][0] + i, set.motif[q][1] - set.motif[p][1] + j,
                            set.motif[q][2] - set.motif[p][2] + l};
              const Vec3 x = set.to_cartesian(df);
              const double d = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
              if (d < 1e-8) {
                throw DegenerateInputError("coincident motif points " + std::to_string(p) + " and " +
                                           std::to_string(q));
              }
              offer(d);
            }
          }
        }
      }
    };
    int r = 0;
    for (;; ++r) {
      visit_shell(r);
      if (best.size() == k && best.top() < r * min_spacing) break;
    }
    for (int extra = 1; extra <= extra_shells; ++extra) visit_shell(r + extra);
    out.shells = std::max(out.shells, r + extra_shells);
    auto& dist = out.per_point[p];
    dist.resize(k);
    for (std::size_t j = k; j-- > 0;) {
      dist[j] = best.top();
      best.pop();
    }
  }
  return out;
}

std::vector<double> amd(const PeriodicPointSet& set, std::size_t k) {
  const auto nn = kth_nearest_distances(set, k);
  std::vector<double> out(k, 0.0);
  for (const auto& row : nn.per_point) {
    for (std::size_t j = 0; j < k; ++j) out[j] += row[j];
  }
  for (double& v : out) v /= static_cast<double>(nn.per_point.size());
  return out;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw DegenerateInputError("descriptor lengths differ (" + std::to_string(a.size()) + " vs " +
                               std::to_string(b.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

std::vector<std::vector<double>> descriptor_distance_matrix(const std::vector<std::vector<double>>& descriptors) {
  const std::size_t n = descriptors.size();
  std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) out[i][j] = out[j][i] = euclidean(descriptors[i], descriptors[j]);
  }
  return out;
}

std::vector<double> novelty_scores(const std::vector<std::vector<double>>& candidates,
                                   const std::vector<std::vector<double>>& references) {
  if (references.empty()) throw DegenerateInputError("novelty: reference set is empty");
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : references) best = std::min(best, euclidean(c, r));
    out.push_back(best);
  }
  return out;
}

PeriodicPointSet make_supercell(const PeriodicPointSet& set, int na, int nb, int nc) {
  if (na < 1 || nb < 1 || nc < 1) throw ContractError("make_supercell: multiples must be positive");
  PeriodicPointSet out;
  const int mult[3] = {na, nb, nc};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.basis[i][j] = set.basis[i][j] * mult[i];
  }
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      for (int l = 0; l < nc; ++l) {
        for (std::size_t p = 0; p < set.motif.size(); ++p) {
          const auto& f = set.motif[p];
          out.motif.push_back({(f[0] + i) / na, (f[1] + j) / nb, (f[2] + l) / nc});
          out.species.push_back(p < set.species.size() ? set.species[p] : std::string());
        }
      }
    }
  }
  out.normalize();
  return out;
}

PeriodicPointSet translate(const PeriodicPointSet& set, const Vec3& shift) {
  PeriodicPointSet out = set;
  for (auto& f : out.motif) {
    for (int i = 0; i < 3; ++i) f[i] += shift[i];
  }
  out.normalize();
  return out;
}

}  // namespace reticgen::crystal

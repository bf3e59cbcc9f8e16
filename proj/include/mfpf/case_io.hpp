#pragma once

// Case-file readers and writer.
//
// Native format (`mfpf-case v1`): one record per line, `kind key=value ...`,
// all quantities per-unit on `base_mva`. Lines starting with '#' are comments.
//
//   mfpf-case v1
//   name ieee14
//   base_mva 100
//   bus id=0 kind=slack base_kv=135 vm=1.06 va=0
//   line id=0 from=0 to=1 r=0.01938 x=0.05917 b=0.0528 i_max=99
//   transformer from=3 to=6 r=0 x=0.20912 b=0 i_max=99
//   generator bus=0 p=2.32 v=1.06
//   load bus=1 p=0.217 q=0.127
//
// MATPOWER subset: `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch` in
// physical units. Branches with a nonzero TAP or joining buses of different
// base kV become transformers; everything else becomes a switchable line in
// file order.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mfpf/error.hpp"
#include "mfpf/grid.hpp"

namespace mfpf {

enum class CaseFormat { Native, MatpowerSubset };

/// Rating applied to MATPOWER branches with RATE_A = 0 (unlimited), in MVA.
inline constexpr double kUnlimitedRatingMva = 9900.0;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(std::string_view tok, std::size_t line, const std::string& field) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || !std::isfinite(v))
    throw ParseError(line, field, "expected a finite number, got '" + std::string(tok) + "'");
  return v;
}

inline int parse_int(std::string_view tok, std::size_t line, const std::string& field) {
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(line, field, "expected an integer, got '" + std::string(tok) + "'");
  return v;
}

/// key=value fields of one native record.
class Record {
 public:
  Record(std::size_t line, const std::vector<std::string_view>& toks) : line_(line) {
    for (std::size_t i = 1; i < toks.size(); ++i) {
      auto eq = toks[i].find('=');
      if (eq == std::string_view::npos || eq == 0)
        throw ParseError(line, std::string(toks[i]), "expected key=value");
      auto key = std::string(toks[i].substr(0, eq));
      if (fields_.count(key)) throw ParseError(line, key, "duplicate field");
      fields_[key] = toks[i].substr(eq + 1);
    }
  }

  std::string_view raw(const std::string& key) const {
    auto it = fields_.find(key);
    if (it == fields_.end()) throw ParseError(line_, key, "missing field");
    return it->second;
  }
  double num(const std::string& key) const { return parse_double(raw(key), line_, key); }
  int integer(const std::string& key) const { return parse_int(raw(key), line_, key); }

 private:
  std::size_t line_;
  std::map<std::string, std::string_view> fields_;
};

inline BusKind parse_kind(std::string_view s, std::size_t line) {
  if (s == "slack") return BusKind::Slack;
  if (s == "pv") return BusKind::PV;
  if (s == "pq") return BusKind::PQ;
  throw ParseError(line, "kind", "unknown bus kind '" + std::string(s) + "'");
}

inline const char* kind_name(BusKind k) {
  switch (k) {
    case BusKind::Slack: return "slack";
    case BusKind::PV: return "pv";
    case BusKind::PQ: return "pq";
  }
  return "pq";
}

inline NetworkCase parse_native(std::string_view text) {
  NetworkCase c;
  bool have_header = false, have_base = false;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    auto toks = split_ws(line);
    if (!have_header) {
      if (toks.size() != 2 || toks[0] != "mfpf-case" || toks[1] != "v1")
        throw ParseError(lineno, "", "expected header 'mfpf-case v1'");
      have_header = true;
      continue;
    }
    const auto& kind = toks[0];
    if (kind == "name") {
      if (toks.size() != 2) throw ParseError(lineno, "name", "expected a single token");
      c.name = std::string(toks[1]);
    } else if (kind == "base_mva") {
      if (toks.size() != 2) throw ParseError(lineno, "base_mva", "expected a single value");
      c.base_mva = parse_double(toks[1], lineno, "base_mva");
      have_base = true;
    } else if (kind == "bus") {
      Record r(lineno, toks);
      c.buses.push_back({r.integer("id"), parse_kind(r.raw("kind"), lineno), r.num("base_kv"),
                         r.num("vm"), r.num("va")});
    } else if (kind == "line") {
      Record r(lineno, toks);
      c.lines.push_back({r.integer("id"), r.integer("from"), r.integer("to"), r.num("r"), r.num("x"),
                         r.num("b"), r.num("i_max")});
    } else if (kind == "transformer") {
      Record r(lineno, toks);
      c.transformers.push_back(
          {r.integer("from"), r.integer("to"), r.num("r"), r.num("x"), r.num("b"), r.num("i_max")});
    } else if (kind == "generator") {
      Record r(lineno, toks);
      c.generators.push_back({r.integer("bus"), r.num("p"), r.num("v")});
    } else if (kind == "load") {
      Record r(lineno, toks);
      c.loads.push_back({r.integer("bus"), r.num("p"), r.num("q")});
    } else {
      throw ParseError(lineno, std::string(kind), "unknown record type");
    }
    if (nl == text.size()) break;
  }
  if (!have_header) throw ParseError(lineno, "", "empty case file");
  if (!have_base) throw ParseError(lineno, "base_mva", "missing base_mva record");
  if (c.name.empty()) c.name = "unnamed";
  return c;
}

/// Rows of one `mpc.<name> = [ ... ];` matrix.
inline std::vector<std::vector<double>> matpower_table(std::string_view text, std::string_view name,
                                                        bool required) {
  const std::string key = "mpc." + std::string(name);
  std::size_t found = std::string_view::npos;
  for (auto p = text.find(key); p != std::string_view::npos; p = text.find(key, p + 1)) {
    auto q = p + key.size();
    while (q < text.size() && (text[q] == ' ' || text[q] == '\t')) ++q;
    if (q < text.size() && text[q] == '=') {
      found = q;
      break;
    }
  }
  if (found == std::string_view::npos) {
    if (required) throw ParseError(1, key, "table not found");
    return {};
  }
  std::size_t lineno = 1;
  for (std::size_t k = 0; k < found; ++k)
    if (text[k] == '\n') ++lineno;
  auto open = text.find('[', found);
  if (open == std::string_view::npos) throw ParseError(lineno, key, "expected '['");
  std::vector<std::vector<double>> rows;
  std::vector<double> row;
  std::size_t i = open + 1;
  std::size_t cur_line = lineno;
  auto flush = [&] {
    if (!row.empty()) rows.push_back(std::move(row));
    row.clear();
  };
  while (i < text.size()) {
    char ch = text[i];
    if (ch == ']') {
      flush();
      return rows;
    }
    if (ch == '%') {
      while (i < text.size() && text[i] != '\n') ++i;
      continue;
    }
    if (ch == '\n') {
      ++cur_line;
      flush();
      ++i;
      continue;
    }
    if (ch == ';') {
      flush();
      ++i;
      continue;
    }
    if (ch == ' ' || ch == '\t' || ch == '\r' || ch == ',') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != ';' && text[j] != '\n' &&
           text[j] != ']' && text[j] != ',' && text[j] != '\r' && text[j] != '%')
      ++j;
    row.push_back(parse_double(text.substr(i, j - i), cur_line, key));
    i = j;
  }
  throw ParseError(cur_line, key, "unterminated table");
}

inline double matpower_scalar(std::string_view text, std::string_view name) {
  const std::string key = "mpc." + std::string(name);
  auto p = text.find(key);
  std::size_t lineno = 1;
  if (p == std::string_view::npos) throw ParseError(lineno, key, "scalar not found");
  for (std::size_t k = 0; k < p; ++k)
    if (text[k] == '\n') ++lineno;
  auto eq = text.find('=', p);
  auto semi = text.find_first_of(";\n", eq);
  if (eq == std::string_view::npos) throw ParseError(lineno, key, "expected '='");
  return parse_double(trim(text.substr(eq + 1, semi - eq - 1)), lineno, key);
}

inline NetworkCase parse_matpower(std::string_view text) {
  NetworkCase c;
  {
    auto p = text.find("function");
    if (p != std::string_view::npos) {
      auto eq = text.find('=', p);
      auto nl = text.find('\n', p);
      if (eq != std::string_view::npos && eq < nl) c.name = std::string(trim(text.substr(eq + 1, nl - eq - 1)));
    }
    if (c.name.empty()) c.name = "matpower";
  }
  c.base_mva = matpower_scalar(text, "baseMVA");
  const auto bus = matpower_table(text, "bus", true);
  const auto gen = matpower_table(text, "gen", true);
  const auto branch = matpower_table(text, "branch", true);

  std::map<int, int> index;  // MATPOWER bus number -> 0-based id
  for (std::size_t i = 0; i < bus.size(); ++i) {
    if (bus[i].size() < 10) throw ParseError(0, "mpc.bus", "row " + std::to_string(i + 1) + " has fewer than 10 columns");
    int num = static_cast<int>(bus[i][0]);
    if (!index.emplace(num, static_cast<int>(i)).second)
      throw ValidationError("duplicate bus number " + std::to_string(num));
  }
  auto lookup = [&index](double num, const std::string& what) {
    auto it = index.find(static_cast<int>(num));
    if (it == index.end())
      throw ValidationError(what + " references unknown bus " + std::to_string(static_cast<int>(num)));
    return it->second;
  };

  std::vector<int> in_service_gens(bus.size(), 0);
  for (std::size_t g = 0; g < gen.size(); ++g) {
    if (gen[g].size() < 8) throw ParseError(0, "mpc.gen", "row " + std::to_string(g + 1) + " has fewer than 8 columns");
    if (gen[g][7] > 0) ++in_service_gens[static_cast<std::size_t>(lookup(gen[g][0], "generator"))];
  }

  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  for (std::size_t i = 0; i < bus.size(); ++i) {
    const auto& row = bus[i];
    Bus b;
    b.id = static_cast<int>(i);
    switch (static_cast<int>(row[1])) {
      case 3: b.kind = BusKind::Slack; break;
      case 2: b.kind = in_service_gens[i] ? BusKind::PV : BusKind::PQ; break;
      case 1: b.kind = BusKind::PQ; break;
      default:
        throw ValidationError("bus " + std::to_string(static_cast<int>(row[0])) + " has unsupported type " +
                              std::to_string(static_cast<int>(row[1])));
    }
    b.vm_init = row[7];
    b.va_init = row[8] * kDegToRad;
    b.base_kv = row[9] > 0 ? row[9] : 1.0;
    c.buses.push_back(b);
    if (row[2] != 0.0 || row[3] != 0.0)
      c.loads.push_back({b.id, row[2] / c.base_mva, row[3] / c.base_mva});
  }
  for (const auto& row : gen) {
    if (row[7] <= 0) continue;
    int b = lookup(row[0], "generator");
    c.generators.push_back({b, row[1] / c.base_mva, row[5]});
    auto& bus_ref = c.buses[static_cast<std::size_t>(b)];
    if (bus_ref.kind != BusKind::PQ) bus_ref.vm_init = row[5];
  }
  int line_id = 0;
  for (std::size_t k = 0; k < branch.size(); ++k) {
    const auto& row = branch[k];
    if (row.size() < 11) throw ParseError(0, "mpc.branch", "row " + std::to_string(k + 1) + " has fewer than 11 columns");
    if (row[10] <= 0) continue;
    int f = lookup(row[0], "branch");
    int t = lookup(row[1], "branch");
    double rating = (row[5] > 0 ? row[5] : kUnlimitedRatingMva) / c.base_mva;
    bool trafo = row[8] != 0.0 ||
                 c.buses[static_cast<std::size_t>(f)].base_kv != c.buses[static_cast<std::size_t>(t)].base_kv;
    if (trafo)
      c.transformers.push_back({f, t, row[2], row[3], row[4], rating});
    else
      c.lines.push_back({line_id++, f, t, row[2], row[3], row[4], rating});
  }
  return c;
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parse and validate a case. Throws ParseError or ValidationError.
inline NetworkCase load_case(std::string_view source, CaseFormat format = CaseFormat::Native) {
  NetworkCase c = format == CaseFormat::Native ? detail::parse_native(source) : detail::parse_matpower(source);
  validate(c);
  return c;
}

inline std::string serialize_case(const NetworkCase& c) {
  using detail::fmt_double;
  std::ostringstream os;
  os << "mfpf-case v1\n";
  os << "name " << c.name << "\n";
  os << "base_mva " << fmt_double(c.base_mva) << "\n";
  for (const auto& b : c.buses)
    os << "bus id=" << b.id << " kind=" << detail::kind_name(b.kind) << " base_kv=" << fmt_double(b.base_kv)
       << " vm=" << fmt_double(b.vm_init) << " va=" << fmt_double(b.va_init) << "\n";
  for (const auto& l : c.lines)
    os << "line id=" << l.id << " from=" << l.from_bus << " to=" << l.to_bus << " r=" << fmt_double(l.r)
       << " x=" << fmt_double(l.x) << " b=" << fmt_double(l.b) << " i_max=" << fmt_double(l.i_max) << "\n";
  for (const auto& t : c.transformers)
    os << "transformer from=" << t.from_bus << " to=" << t.to_bus << " r=" << fmt_double(t.r)
       << " x=" << fmt_double(t.x) << " b=" << fmt_double(t.b) << " i_max=" << fmt_double(t.i_max) << "\n";
  for (const auto& g : c.generators)
    os << "generator bus=" << g.bus << " p=" << fmt_double(g.p_set) << " v=" << fmt_double(g.v_set) << "\n";
  for (const auto& l : c.loads)
    os << "load bus=" << l.bus << " p=" << fmt_double(l.p_set) << " q=" << fmt_double(l.q_set) << "\n";
  return os.str();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Load from disk; `.m` files are read as MATPOWER, anything else as native.
inline NetworkCase load_case_file(const std::string& path) {
  const auto text = read_text_file(path);
  const bool is_m = path.size() > 2 && path.compare(path.size() - 2, 2, ".m") == 0;
  return load_case(text, is_m ? CaseFormat::MatpowerSubset : CaseFormat::Native);
}

}  // namespace mfpf

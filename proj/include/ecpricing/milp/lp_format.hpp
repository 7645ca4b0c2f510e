#pragma once

// CPLEX-style LP text export.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>

#include "ecpricing/milp/model.hpp"

namespace ecpricing::milp {

namespace detail {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// LP names may contain letters, digits and a few punctuation characters and
/// must not start with a digit or a period. Brackets become periods.
inline std::string lp_name(const std::string& raw) {
  std::string out;
  out.reserve(raw.size() + 1);
  for (char ch : raw) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') out += ch;
    else if (ch == ']') continue;
    else out += '.';
  }
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out.front())) || out.front() == '.') out.insert(0, "_");
  return out;
}

class LineWriter {
 public:
  explicit LineWriter(std::ostringstream& os) : os_(os) {}
  void token(const std::string& tok) {
    if (width_ + tok.size() + 1 > 200) {
      os_ << "\n   ";
      width_ = 3;
    }
    os_ << ' ' << tok;
    width_ += tok.size() + 1;
  }
  void start(const std::string& label) {
    os_ << ' ' << label << ':';
    width_ = label.size() + 2;
  }
  void end() {
    os_ << '\n';
    width_ = 0;
  }

 private:
  std::ostringstream& os_;
  std::size_t width_ = 0;
};

inline void write_terms(LineWriter& w, const std::vector<Term>& terms, const std::vector<std::string>& names) {
  bool first = true;
  for (const auto& t : terms) {
    if (t.coef < 0) w.token("- " + format_number(-t.coef) + " " + names[t.var.index]);
    else w.token((first ? "" : "+ ") + format_number(t.coef) + " " + names[t.var.index]);
    first = false;
  }
}

}  // namespace detail

/// Emit the model in LP format. Variable and row names are derived
/// deterministically from the model's names.
inline std::string export_lp(const MilpModel& model) {
  std::vector<std::string> names;
  names.reserve(model.variables().size());
  std::unordered_set<std::string> seen;
  for (const auto& v : model.variables()) {
    names.push_back(detail::lp_name(v.name));
    if (!seen.insert(names.back()).second) throw InvalidArgument("LP export: name collision on " + names.back());
  }

  std::ostringstream os;
  os << "\\ ecpricing model: " << model.variables().size() << " variables, " << model.constraints().size()
     << " constraints, " << model.num_binaries() << " binaries\n";
  os << "Minimize\n";
  detail::LineWriter w(os);
  w.start("obj");
  detail::write_terms(w, model.objective().terms(), names);
  if (model.objective().constant() != 0.0 || model.objective().terms().empty()) {
    const double c = model.objective().constant();
    w.token((c < 0 ? "- " : (model.objective().terms().empty() ? "" : "+ ")) + detail::format_number(std::abs(c)));
  }
  w.end();

  os << "Subject To\n";
  std::unordered_set<std::string> row_seen;
  for (std::size_t i = 0; i < model.constraints().size(); ++i) {
    const auto& c = model.constraints()[i];
    if (c.terms.empty() && names.empty()) continue;  // nothing to reference
    std::string label = detail::lp_name(c.name);
    if (!row_seen.insert(label).second) label += ".r" + std::to_string(i);
    w.start(label);
    if (c.terms.empty()) w.token("0 " + names.front());
    else detail::write_terms(w, c.terms, names);
    w.token(c.sense == Sense::le ? "<=" : c.sense == Sense::ge ? ">=" : "=");
    w.token(detail::format_number(c.rhs));
    w.end();
  }

  os << "Bounds\n";
  for (std::size_t j = 0; j < model.variables().size(); ++j) {
    const auto& v = model.variables()[j];
    if (v.kind == VarKind::binary) continue;
    const bool lo_inf = std::isinf(v.lower), hi_inf = std::isinf(v.upper);
    if (lo_inf && hi_inf) os << ' ' << names[j] << " free\n";
    else if (!lo_inf && !hi_inf && v.lower == v.upper) os << ' ' << names[j] << " = " << detail::format_number(v.lower) << '\n';
    else
      os << ' ' << (lo_inf ? std::string("-inf") : detail::format_number(v.lower)) << " <= " << names[j]
         << " <= " << (hi_inf ? std::string("+inf") : detail::format_number(v.upper)) << '\n';
  }

  if (model.num_binaries() > 0) {
    os << "Binaries\n";
    for (std::size_t j = 0; j < model.variables().size(); ++j)
      if (model.variables()[j].kind == VarKind::binary) os << ' ' << names[j] << '\n';
  }
  os << "End\n";
  return os.str();
}

inline void write_lp_file(const MilpModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << export_lp(model);
  if (!out) throw Error("failed writing " + path);
}

}  // namespace ecpricing::milp

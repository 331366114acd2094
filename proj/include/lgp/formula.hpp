#pragma once

#include <cctype>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgp/dataset.hpp"

namespace lgp {

enum class ComponentKind {
  SharedEQ,                     // gp(x)
  CategoricalOffset,            // zs(z)
  CategoricalInteraction,       // zs(z)*gp(x)
  Nonstationary,                // gp_ns(x)
  VarianceMasked,               // gp_vm(x)
  HeterogeneousVarianceMasked,  // het(id)*gp_vm(x)
};

struct ComponentSpec {
  int index = 0;  // 1-based position in the formula
  ComponentKind kind = ComponentKind::SharedEQ;
  std::string continuous_covariate;
  std::string categorical_covariate;
  bool uncertain_effect_time = false;

  bool has_continuous() const { return !continuous_covariate.empty(); }
  bool has_categorical() const { return !categorical_covariate.empty(); }
  bool is_warped() const {
    return kind == ComponentKind::Nonstationary || kind == ComponentKind::VarianceMasked ||
           kind == ComponentKind::HeterogeneousVarianceMasked;
  }
  bool is_disease() const {
    return kind == ComponentKind::VarianceMasked ||
           kind == ComponentKind::HeterogeneousVarianceMasked;
  }

  // Canonical text of this term.
  std::string term() const {
    std::string inner;
    switch (kind) {
      case ComponentKind::SharedEQ:
        inner = "gp(" + continuous_covariate + ")";
        break;
      case ComponentKind::CategoricalOffset:
        inner = "zs(" + categorical_covariate + ")";
        break;
      case ComponentKind::CategoricalInteraction:
        inner = "zs(" + categorical_covariate + ")*gp(" + continuous_covariate + ")";
        break;
      case ComponentKind::Nonstationary:
        inner = "gp_ns(" + continuous_covariate + ")";
        break;
      case ComponentKind::VarianceMasked:
        inner = "gp_vm(" + continuous_covariate + ")";
        break;
      case ComponentKind::HeterogeneousVarianceMasked:
        inner = "het(" + categorical_covariate + ")*gp_vm(" + continuous_covariate + ")";
        break;
    }
    if (uncertain_effect_time) return "unc(" + inner + ")";
    return inner;
  }

  bool operator==(const ComponentSpec& o) const {
    return kind == o.kind && continuous_covariate == o.continuous_covariate &&
           categorical_covariate == o.categorical_covariate &&
           uncertain_effect_time == o.uncertain_effect_time;
  }
};

enum class LikelihoodFamily { Gaussian, Poisson, NegBinomial, Binomial, BetaBinomial };

inline std::string to_string(LikelihoodFamily f) {
  switch (f) {
    case LikelihoodFamily::Gaussian: return "gaussian";
    case LikelihoodFamily::Poisson: return "poisson";
    case LikelihoodFamily::NegBinomial: return "nb";
    case LikelihoodFamily::Binomial: return "binomial";
    case LikelihoodFamily::BetaBinomial: return "bb";
  }
  throw Error("unreachable");
}

inline LikelihoodFamily likelihood_from_string(const std::string& s) {
  if (s == "gaussian") return LikelihoodFamily::Gaussian;
  if (s == "poisson") return LikelihoodFamily::Poisson;
  if (s == "nb") return LikelihoodFamily::NegBinomial;
  if (s == "binomial") return LikelihoodFamily::Binomial;
  if (s == "bb") return LikelihoodFamily::BetaBinomial;
  throw Error("unknown likelihood '" + s + "' (expected gaussian|poisson|nb|binomial|bb)");
}

struct ModelSpec {
  std::string response;
  std::vector<ComponentSpec> components;
  LikelihoodFamily likelihood = LikelihoodFamily::Gaussian;

  bool operator==(const ModelSpec& o) const {
    return response == o.response && components == o.components;
  }
};

class FormulaError : public Error {
 public:
  FormulaError(const std::string& msg, std::size_t offset)
      : Error(msg + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

namespace detail {

class FormulaParser {
 public:
  explicit FormulaParser(const std::string& text) : text_(text) {}

  ModelSpec parse() {
    ModelSpec spec;
    spec.response = expect_identifier("response name");
    expect('~');
    spec.components.push_back(parse_term());
    while (true) {
      skip_ws();
      if (done()) break;
      expect('+');
      spec.components.push_back(parse_term());
    }
    if (spec.components.empty()) throw FormulaError("formula has no terms", pos_);
    for (std::size_t j = 0; j < spec.components.size(); ++j) {
      spec.components[j].index = static_cast<int>(j) + 1;
      for (std::size_t k = 0; k < j; ++k) {
        if (spec.components[j] == spec.components[k]) {
          throw FormulaError("duplicate term '" + spec.components[j].term() + "'", pos_);
        }
      }
    }
    return spec;
  }

 private:
  ComponentSpec parse_term() {
    skip_ws();
    std::size_t start = pos_;
    std::string head = expect_identifier("term");
    ComponentSpec c;
    if (head == "unc") {
      expect('(');
      c = parse_bare_term();
      if (c.kind != ComponentKind::VarianceMasked &&
          c.kind != ComponentKind::HeterogeneousVarianceMasked) {
        throw FormulaError("unc(...) requires a gp_vm term", start);
      }
      c.uncertain_effect_time = true;
      expect(')');
      return c;
    }
    return parse_bare_term_with_head(head, start);
  }

  ComponentSpec parse_bare_term() {
    skip_ws();
    std::size_t start = pos_;
    std::string head = expect_identifier("term");
    return parse_bare_term_with_head(head, start);
  }

  ComponentSpec parse_bare_term_with_head(const std::string& head, std::size_t start) {
    ComponentSpec c;
    if (head == "gp") {
      c.kind = ComponentKind::SharedEQ;
      c.continuous_covariate = parse_arg();
    } else if (head == "gp_ns") {
      c.kind = ComponentKind::Nonstationary;
      c.continuous_covariate = parse_arg();
    } else if (head == "gp_vm") {
      c.kind = ComponentKind::VarianceMasked;
      c.continuous_covariate = parse_arg();
    } else if (head == "zs") {
      c.kind = ComponentKind::CategoricalOffset;
      c.categorical_covariate = parse_arg();
      skip_ws();
      if (peek() == '*') {
        ++pos_;
        skip_ws();
        std::size_t p = pos_;
        std::string second = expect_identifier("term");
        if (second != "gp") throw FormulaError("expected gp(...) after zs(...)*", p);
        c.kind = ComponentKind::CategoricalInteraction;
        c.continuous_covariate = parse_arg();
      }
    } else if (head == "het") {
      c.categorical_covariate = parse_arg();
      skip_ws();
      if (peek() != '*') throw FormulaError("het(...) must be followed by *gp_vm(...)", pos_);
      ++pos_;
      skip_ws();
      std::size_t p = pos_;
      std::string second = expect_identifier("term");
      if (second != "gp_vm") throw FormulaError("expected gp_vm(...) after het(...)*", p);
      c.kind = ComponentKind::HeterogeneousVarianceMasked;
      c.continuous_covariate = parse_arg();
    } else {
      throw FormulaError("unknown term '" + head + "'", start);
    }
    return c;
  }

  std::string parse_arg() {
    expect('(');
    std::string name = expect_identifier("covariate name");
    expect(')');
    return name;
  }

  bool done() const { return pos_ >= text_.size(); }
  char peek() const { return done() ? '\0' : text_[pos_]; }

  void skip_ws() {
    while (!done() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (done() || text_[pos_] != c) {
      throw FormulaError(std::string("expected '") + c + "'", pos_);
    }
    ++pos_;
  }

  std::string expect_identifier(const std::string& what) {
    skip_ws();
    std::size_t start = pos_;
    auto ok_first = [](char c) {
      return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
    };
    auto ok_rest = [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
    };
    if (done() || !ok_first(text_[pos_])) {
      throw FormulaError("expected " + what, pos_);
    }
    ++pos_;
    while (!done() && ok_rest(text_[pos_])) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ModelSpec parse_formula(const std::string& text) {
  return detail::FormulaParser(text).parse();
}

inline std::string print_formula(const ModelSpec& spec) {
  std::string out = spec.response + " ~ ";
  for (std::size_t j = 0; j < spec.components.size(); ++j) {
    if (j > 0) out += " + ";
    out += spec.components[j].term();
  }
  return out;
}

// Structural checks of a formula against a dataset: every referenced
// covariate must exist with the right kind, het(...) must use the id column,
// and gp_vm/unc need a maskable covariate.
inline void validate_spec(const ModelSpec& spec, const LongitudinalDataset& ds) {
  if (spec.response != ds.response_name()) {
    throw Error("formula response '" + spec.response + "' does not match dataset response '" +
                ds.response_name() + "'");
  }
  for (const auto& c : spec.components) {
    if (c.has_continuous()) {
      if (!ds.has_column(c.continuous_covariate)) {
        throw Error("unknown covariate '" + c.continuous_covariate + "' in term " + c.term());
      }
      const auto& col = ds.column(c.continuous_covariate);
      if (col.kind != CovariateKind::Continuous) {
        throw Error("covariate '" + c.continuous_covariate + "' in term " + c.term() +
                    " must be continuous");
      }
      if (c.is_disease() && !col.maskable) {
        throw Error("term " + c.term() + " requires a maskable covariate");
      }
    }
    if (c.has_categorical()) {
      if (!ds.has_column(c.categorical_covariate)) {
        throw Error("unknown covariate '" + c.categorical_covariate + "' in term " + c.term());
      }
      const auto& col = ds.column(c.categorical_covariate);
      if (col.kind != CovariateKind::Categorical) {
        throw Error("covariate '" + c.categorical_covariate + "' in term " + c.term() +
                    " must be categorical");
      }
      if (col.num_categories() < 2) {
        throw Error("covariate '" + c.categorical_covariate + "' needs at least two levels");
      }
    }
    if (c.kind == ComponentKind::HeterogeneousVarianceMasked &&
        c.categorical_covariate != ds.id_column()) {
      throw Error("het(...) must use the individual id column '" + ds.id_column() + "'");
    }
  }
  if ((spec.likelihood == LikelihoodFamily::Binomial ||
       spec.likelihood == LikelihoodFamily::BetaBinomial) &&
      !ds.has_trials()) {
    throw Error("binomial likelihoods require a trials column");
  }
}

}  // namespace lgp

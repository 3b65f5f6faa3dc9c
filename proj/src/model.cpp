#include "zidp/model.hpp"

#include <numbers>
#include <set>
#include <sstream>

#include "zidp/error.hpp"

namespace zidp {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2 pi)

Error schema_error(const std::string& msg) { return Error(ErrorKind::schema, msg); }

// x'v over the encoded block plus intercept, skipping the treatment column.
double treatment_dot(std::span<const double> x, const Vector& eta) noexcept {
  double s = eta[0];
  const std::size_t p = x.size() - 2;
  for (std::size_t k = 0; k < p; ++k) s += x[k + 2] * eta[k + 1];
  return s;
}

double row_dot(std::span<const double> x, const Vector& v) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * v[k];
  return s;
}

}  // namespace

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::schema: return "schema error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::usage: return "usage error";
    case ErrorKind::data: return "data error";
    case ErrorKind::io: return "io error";
    case ErrorKind::resume: return "resume error";
  }
  return "error";
}

const char* to_string(CovariateKind kind) noexcept {
  switch (kind) {
    case CovariateKind::continuous: return "continuous";
    case CovariateKind::binary: return "binary";
    case CovariateKind::categorical: return "categorical";
  }
  return "?";
}

CovariateSchema::CovariateSchema(std::vector<CovariateSpec> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw schema_error("schema must declare at least one covariate");
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.name.empty()) throw schema_error("covariate with empty name");
    if (!seen.insert(e.name).second) throw schema_error("duplicate covariate name '" + e.name + "'");
    if (e.kind == CovariateKind::categorical && e.levels < 2)
      throw schema_error("categorical covariate '" + e.name + "' needs at least 2 levels");
    encoded_width_ += e.encoded_width();
  }
}

int CovariateSchema::index_of(std::string_view name) const noexcept {
  for (std::size_t k = 0; k < entries_.size(); ++k)
    if (entries_[k].name == name) return static_cast<int>(k);
  return -1;
}

bool CovariateSchema::operator==(const CovariateSchema& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const auto& l = entries_[k];
    const auto& r = other.entries_[k];
    if (l.name != r.name || l.kind != r.kind) return false;
    if (l.kind == CovariateKind::categorical && l.levels != r.levels) return false;
  }
  return true;
}

void check_covariate_value(const CovariateSpec& spec, double value) {
  if (!std::isfinite(value)) throw schema_error("non-finite value for covariate '" + spec.name + "'");
  switch (spec.kind) {
    case CovariateKind::continuous: return;
    case CovariateKind::binary:
      if (value != 0.0 && value != 1.0)
        throw schema_error("binary covariate '" + spec.name + "' must be 0 or 1");
      return;
    case CovariateKind::categorical:
      if (value != std::floor(value) || value < 0.0 || value >= spec.levels) {
        std::ostringstream os;
        os << "categorical covariate '" << spec.name << "' must be a level index in [0, "
           << spec.levels - 1 << "]";
        throw schema_error(os.str());
      }
      return;
  }
}

void encode_covariates(const CovariateSchema& schema, std::span<const double> l_row,
                       std::span<double> out) {
  if (l_row.size() != schema.size())
    throw schema_error("covariate row has " + std::to_string(l_row.size()) + " entries, schema has " +
                       std::to_string(schema.size()));
  if (out.size() != static_cast<std::size_t>(schema.encoded_width()))
    throw schema_error("encoded buffer width mismatch");
  std::size_t col = 0;
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto& spec = schema[k];
    check_covariate_value(spec, l_row[k]);
    if (spec.kind == CovariateKind::categorical) {
      const int level = static_cast<int>(l_row[k]);
      for (int j = 1; j < spec.levels; ++j) out[col++] = (level == j) ? 1.0 : 0.0;
    } else {
      out[col++] = l_row[k];
    }
  }
}

DesignVectors design_vectors(const CovariateSchema& schema, int a, std::span<const double> l_row) {
  if (a != 0 && a != 1) throw schema_error("treatment must be 0 or 1");
  const int p = schema.encoded_width();
  std::vector<double> enc(static_cast<std::size_t>(p));
  encode_covariates(schema, l_row, enc);
  DesignVectors d{Vector(p + 2), Vector(p + 1)};
  d.x[0] = 1.0;
  d.x[1] = a;
  d.m[0] = 1.0;
  for (int k = 0; k < p; ++k) {
    d.x[k + 2] = enc[static_cast<std::size_t>(k)];
    d.m[k + 1] = enc[static_cast<std::size_t>(k)];
  }
  return d;
}

Dataset::Dataset(CovariateSchema schema, std::vector<double> y, std::vector<int> a, RowMatrix l,
                 double zero_epsilon)
    : schema_(std::move(schema)), y_(std::move(y)), a_(std::move(a)), l_(std::move(l)),
      zero_epsilon_(zero_epsilon) {
  const std::size_t n = y_.size();
  if (n == 0) throw schema_error("dataset must contain at least one subject");
  if (a_.size() != n || static_cast<std::size_t>(l_.rows()) != n)
    throw schema_error("outcome, treatment and covariate lengths differ");
  if (static_cast<std::size_t>(l_.cols()) != schema_.size())
    throw schema_error("covariate matrix has " + std::to_string(l_.cols()) + " columns, schema has " +
                       std::to_string(schema_.size()));
  if (!(zero_epsilon_ >= 0.0)) throw schema_error("zero_epsilon must be non-negative");

  const int p = schema_.encoded_width();
  x_.resize(static_cast<Eigen::Index>(n), p + 2);
  z_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y_[i])) throw schema_error("non-finite outcome at subject " + std::to_string(i));
    if (a_[i] != 0 && a_[i] != 1)
      throw schema_error("treatment at subject " + std::to_string(i) + " is not 0/1");
    z_[i] = std::abs(y_[i]) <= zero_epsilon_ ? 1 : 0;
    double* row = x_.data() + i * static_cast<std::size_t>(p + 2);
    row[0] = 1.0;
    row[1] = a_[i];
    encode_covariates(schema_, this->l(i), std::span<double>(row + 2, static_cast<std::size_t>(p)));
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<double> y;
  std::vector<int> a;
  RowMatrix l(static_cast<Eigen::Index>(rows.size()), l_.cols());
  y.reserve(rows.size());
  a.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    y.push_back(y_[rows[r]]);
    a.push_back(a_[rows[r]]);
    l.row(static_cast<Eigen::Index>(r)) = l_.row(static_cast<Eigen::Index>(rows[r]));
  }
  return Dataset(schema_, std::move(y), std::move(a), std::move(l), zero_epsilon_);
}

void ClusterParams::validate(const CovariateSchema& schema) const {
  if (beta.size() != schema.outcome_dim() || gamma.size() != schema.outcome_dim() ||
      eta.size() != schema.treatment_dim())
    throw schema_error("coefficient vector lengths do not match the schema");
  if (!(phi > 0.0) || !std::isfinite(phi)) throw schema_error("outcome variance must be positive");
  if (!beta.allFinite() || !gamma.allFinite() || !eta.allFinite())
    throw schema_error("non-finite regression coefficient");
  if (theta.size() != schema.size()) throw schema_error("covariate parameter count mismatch");
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto& spec = schema[k];
    const auto& t = theta[k];
    switch (spec.kind) {
      case CovariateKind::continuous: {
        const auto* c = std::get_if<ContinuousParam>(&t);
        if (!c || !(c->variance > 0.0) || !std::isfinite(c->mean))
          throw schema_error("invalid continuous parameter for '" + spec.name + "'");
        break;
      }
      case CovariateKind::binary: {
        const auto* b = std::get_if<BinaryParam>(&t);
        if (!b || !(b->prob > 0.0 && b->prob < 1.0))
          throw schema_error("invalid binary parameter for '" + spec.name + "'");
        break;
      }
      case CovariateKind::categorical: {
        const auto* c = std::get_if<CategoricalParam>(&t);
        if (!c || c->probs.size() != static_cast<std::size_t>(spec.levels))
          throw schema_error("invalid categorical parameter for '" + spec.name + "'");
        double s = 0.0;
        for (double q : c->probs) {
          if (!(q > 0.0 && q < 1.0)) throw schema_error("categorical probability outside (0,1)");
          s += q;
        }
        if (std::abs(s - 1.0) > 1e-12) throw schema_error("categorical probabilities do not sum to 1");
        break;
      }
    }
  }
}

double expit(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double loglik_outcome_only(const Dataset& data, std::size_t i, const ClusterParams& w) {
  const auto x = data.x(i);
  const double eta_z = row_dot(x, w.gamma);
  if (data.z(i) == 1) return log_expit(eta_z);
  const double r = data.y(i) - row_dot(x, w.beta);
  return log_expit(-eta_z) - 0.5 * (kLogTwoPi + std::log(w.phi)) - 0.5 * r * r / w.phi;
}

double loglik_treatment(const Dataset& data, std::size_t i, const ClusterParams& w) {
  const double t = treatment_dot(data.x(i), w.eta);
  return data.a(i) == 1 ? log_expit(t) : log_expit(-t);
}

double loglik_covariates(const CovariateSchema& schema, std::span<const double> l_row,
                         const CovariateParams& theta) {
  double s = 0.0;
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const double v = l_row[k];
    switch (schema[k].kind) {
      case CovariateKind::continuous: {
        const auto& c = std::get<ContinuousParam>(theta[k]);
        const double r = v - c.mean;
        s += -0.5 * (kLogTwoPi + std::log(c.variance)) - 0.5 * r * r / c.variance;
        break;
      }
      case CovariateKind::binary: {
        const auto& b = std::get<BinaryParam>(theta[k]);
        s += v == 1.0 ? std::log(b.prob) : std::log1p(-b.prob);
        break;
      }
      case CovariateKind::categorical: {
        const auto& c = std::get<CategoricalParam>(theta[k]);
        s += std::log(c.probs[static_cast<std::size_t>(v)]);
        break;
      }
    }
  }
  return s;
}

double loglik_subject(const Dataset& data, std::size_t i, const ClusterParams& w) {
  return loglik_outcome_only(data, i, w) + loglik_treatment(data, i, w) +
         loglik_covariates(data.schema(), data.l(i), w.theta);
}

ClusterDensity::ClusterDensity(const CovariateSchema& schema, const ClusterParams& w)
    : beta_(w.beta), gamma_(w.gamma), eta_(w.eta), inv_phi_(1.0 / w.phi),
      log_norm_phi_(-0.5 * (kLogTwoPi + std::log(w.phi))) {
  terms_.reserve(schema.size());
  for (std::size_t k = 0; k < schema.size(); ++k) {
    Term t{schema[k].kind};
    switch (t.kind) {
      case CovariateKind::continuous: {
        const auto& c = std::get<ContinuousParam>(w.theta[k]);
        t.a = c.mean;
        t.b = 1.0 / c.variance;
        t.c = -0.5 * (kLogTwoPi + std::log(c.variance));
        break;
      }
      case CovariateKind::binary: {
        const auto& b = std::get<BinaryParam>(w.theta[k]);
        t.a = std::log(b.prob);
        t.b = std::log1p(-b.prob);
        break;
      }
      case CovariateKind::categorical: {
        const auto& c = std::get<CategoricalParam>(w.theta[k]);
        t.offset = log_probs_.size();
        for (double q : c.probs) log_probs_.push_back(std::log(q));
        break;
      }
    }
    terms_.push_back(t);
  }
}

double ClusterDensity::outcome(const Dataset& data, std::size_t i) const noexcept {
  const auto x = data.x(i);
  const double eta_z = row_dot(x, gamma_);
  if (data.z(i) == 1) return log_expit(eta_z);
  const double r = data.y(i) - row_dot(x, beta_);
  return log_expit(-eta_z) + log_norm_phi_ - 0.5 * r * r * inv_phi_;
}

double ClusterDensity::treatment(const Dataset& data, std::size_t i) const noexcept {
  const double t = treatment_dot(data.x(i), eta_);
  return data.a(i) == 1 ? log_expit(t) : log_expit(-t);
}

double ClusterDensity::treatment_logit(std::span<const double> x_row) const noexcept {
  return treatment_dot(x_row, eta_);
}

double ClusterDensity::covariates(std::span<const double> l_row) const noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    const Term& t = terms_[k];
    const double v = l_row[k];
    switch (t.kind) {
      case CovariateKind::continuous: {
        const double r = v - t.a;
        s += t.c - 0.5 * r * r * t.b;
        break;
      }
      case CovariateKind::binary: s += v == 1.0 ? t.a : t.b; break;
      case CovariateKind::categorical: s += log_probs_[t.offset + static_cast<std::size_t>(v)]; break;
    }
  }
  return s;
}

}  // namespace zidp

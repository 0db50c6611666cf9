#include "uvlm/optimizer.hpp"

#include <cmath>

#include "json.hpp"
#include "uvlm/errors.hpp"

namespace uvlm {

OptimizerConfig::Kind OptimizerConfig::parse_kind(const std::string& name) {
  if (name == "adamw") return Kind::kAdamW;
  if (name == "sgd") return Kind::kSgd;
  throw ConfigError("unknown optimizer kind: " + name);
}

std::string OptimizerConfig::kind_name() const {
  return kind == Kind::kAdamW ? "adamw" : "sgd";
}

Optimizer::Optimizer(NamedTensors params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr <= 0.0) throw ConfigError("learning rate must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(cfg_.kind == OptimizerConfig::Kind::kAdamW ? t.size() : 0,
                    0.0);
  }
}

void Optimizer::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
  for (size_t p = 0; p < params_.size(); ++p) {
    auto& [name, t] = params_[p];
    std::vector<double>& w = t.values();
    const std::vector<double>& g = t.grad();
    for (double gi : g)
      if (!std::isfinite(gi))
        throw NumericError("non-finite gradient in parameter " + name);
    if (cfg_.kind == OptimizerConfig::Kind::kAdamW) {
      std::vector<double>& m = m_[p];
      std::vector<double>& v = v_[p];
      for (size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        double mh = m[i] / bc1;
        double vh = v[i] / bc2;
        w[i] -= cfg_.lr * (mh / (std::sqrt(vh) + cfg_.eps) +
                           cfg_.weight_decay * w[i]);
      }
    } else {
      std::vector<double>& m = m_[p];
      for (size_t i = 0; i < w.size(); ++i) {
        double upd = g[i] + cfg_.weight_decay * w[i];
        if (cfg_.momentum != 0.0) {
          m[i] = cfg_.momentum * m[i] + upd;
          upd = m[i];
        }
        w[i] -= cfg_.lr * upd;
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

std::string Optimizer::state_to_json() const {
  nlohmann::json j;
  j["step"] = step_;
  j["m"] = m_;
  j["v"] = v_;
  return j.dump();
}

void Optimizer::load_state_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  step_ = j.at("step").get<size_t>();
  std::vector<std::vector<double>> m = j.at("m"), v = j.at("v");
  if (m.size() != params_.size() || v.size() != params_.size())
    throw ConfigError("optimizer state does not match parameter list");
  for (size_t p = 0; p < params_.size(); ++p)
    if (m[p].size() != m_[p].size() || v[p].size() != v_[p].size())
      throw ConfigError("optimizer state shape mismatch for " +
                        params_[p].first);
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace uvlm

#include "pfl/config.hpp"

#include "pfl/errors.hpp"

namespace pfl {

const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names = {
      "apple", "fedala", "fedbabu", "fedgc", "fedpac", "fedpcl", "fedproto"};
  return names;
}

std::string strategy_name(const StrategyConfig& config) {
  return strategy_names()[config.index()];
}

void GlobalConfig::validate() const {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (!(client_fraction > 0.0 && client_fraction <= 1.0)) {
    throw ConfigError("client_fraction must be in (0, 1]");
  }
  if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (local_lr < 0.0) throw ConfigError("local_lr must be >= 0");
  if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout_fraction must be in (0, 1)");
  }
  if (eval_stride < 1) throw ConfigError("eval_stride must be >= 1");
  if (threads < 0) throw ConfigError("threads must be >= 0");

  struct Check {
    void operator()(const AppleConfig& c) const {
      if (c.eta1 <= 0.0 || c.eta2 < 0.0) throw ConfigError("apple: eta1 must be > 0, eta2 >= 0");
      if (c.mu < 0.0) throw ConfigError("apple: mu must be >= 0");
      if (c.loss_decay <= 0.0) throw ConfigError("apple: loss_decay must be positive");
    }
    void operator()(const AlaConfig& c) const {
      if (c.ala_lr <= 0.0) throw ConfigError("fedala: ala_lr must be positive");
      if (!(c.data_percent > 0.0 && c.data_percent <= 100.0)) {
        throw ConfigError("fedala: data_percent must be in (0, 100]");
      }
      if (c.layer_range < 1) throw ConfigError("fedala: layer_range must be >= 1");
    }
    void operator()(const BabuConfig& c) const {
      if (c.fine_tune_epochs < 0) throw ConfigError("fedbabu: fine_tune_epochs must be >= 0");
    }
    void operator()(const GcConfig& c) const {
      if (c.lambda < 0.0) throw ConfigError("fedgc: lambda must be >= 0");
    }
    void operator()(const PacConfig& c) const {
      if (c.lambda < 0.0) throw ConfigError("fedpac: lambda must be >= 0");
      if (c.eta_f <= 0.0 || c.eta_g <= 0.0) {
        throw ConfigError("fedpac: eta_f and eta_g must be positive");
      }
    }
    void operator()(const PclConfig& c) const {
      if (c.temperature <= 0.0) throw ConfigError("fedpcl: temperature must be positive");
    }
    void operator()(const ProtoConfig& c) const {
      if (c.lambda < 0.0) throw ConfigError("fedproto: lambda must be >= 0");
    }
  };
  std::visit(Check{}, strategy);
}

}  // namespace pfl

#include "pfl/strategies/apple.hpp"
#include "pfl/strategies/fedala.hpp"
#include "pfl/strategies/fedbabu.hpp"
#include "pfl/strategies/fedgc.hpp"
#include "pfl/strategies/fedpac.hpp"
#include "pfl/strategies/fedpcl.hpp"
#include "pfl/strategies/fedproto.hpp"
#include "pfl/strategy.hpp"

namespace pfl {

std::unique_ptr<Strategy> make_strategy(const GlobalConfig& config,
                                        const ModelParams& init) {
  struct Maker {
    const GlobalConfig& config;
    const ModelParams& init;
    std::unique_ptr<Strategy> operator()(const AppleConfig&) const {
      return make_apple_strategy(config, init);
    }
    std::unique_ptr<Strategy> operator()(const AlaConfig&) const {
      return make_fedala_strategy(config, init);
    }
    std::unique_ptr<Strategy> operator()(const BabuConfig&) const {
      return make_fedbabu_strategy(config, init);
    }
    std::unique_ptr<Strategy> operator()(const GcConfig&) const {
      return make_fedgc_strategy(config, init);
    }
    std::unique_ptr<Strategy> operator()(const PacConfig&) const {
      return make_fedpac_strategy(config, init);
    }
    std::unique_ptr<Strategy> operator()(const PclConfig&) const {
      return make_fedpcl_strategy(config, init);
    }
    std::unique_ptr<Strategy> operator()(const ProtoConfig&) const {
      return make_fedproto_strategy(config, init);
    }
  };
  return std::visit(Maker{config, init}, config.strategy);
}

}  // namespace pfl

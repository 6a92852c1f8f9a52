#pragma once

#include <memory>

#include "pfl/strategy.hpp"

namespace pfl {

std::unique_ptr<Strategy> make_fedproto_strategy(const GlobalConfig& config,
                                                 const ModelParams& init);

}  // namespace pfl

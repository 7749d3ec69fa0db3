#pragma once

#include "memcap/capacity.hpp"
#include "memcap/construct_fnn.hpp"
#include "memcap/construct_genpos.hpp"
#include "memcap/serialize.hpp"
#include "memcap/sgd.hpp"

namespace memcap {

Json to_json(const CapacityCheck& c);
Json to_json(const BlockSummary& b);
Json to_json(const ConstructionReport& r);
Json to_json(const GenposReport& r);
Json to_json(const GeneralPositionReport& r);
Json to_json(const RefuteResult& r);
Json to_json(const EpsilonRun& r);
Json to_json(const ProbeReport& r);
Json to_json(const PiecewiseLinear1D& f);

}  // namespace memcap

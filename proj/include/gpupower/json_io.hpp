#pragma once

#include "json.hpp"

#include "gpupower/domain.hpp"

namespace gpupower {

using Json = nlohmann::json;

void to_json(Json& j, const SlurmJobRecord& r);
void from_json(const Json& j, SlurmJobRecord& r);
void to_json(Json& j, const DcgmSample& s);
void from_json(const Json& j, DcgmSample& s);
void to_json(Json& j, const AggregateTargets& t);
void from_json(const Json& j, AggregateTargets& t);
void to_json(Json& j, const JobTelemetry& job);
void from_json(const Json& j, JobTelemetry& job);
void to_json(Json& j, const PowerBandScheme& scheme);
PowerBandScheme scheme_from_json(const Json& j);

}  // namespace gpupower

#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "copiv/dgp.hpp"
#include "copiv/dr.hpp"
#include "copiv/estimate.hpp"
#include "copiv/functionals.hpp"
#include "copiv/ident.hpp"
#include "copiv/infer.hpp"

namespace copiv {

using json = nlohmann::json;

json to_json(const DgpSpec& spec);
DgpSpec dgp_from_json(const json& j);

json to_json(const DRFit& fit);
json to_json(const PotentialOutcomeFit& fit);
json to_json(const MarginalCDF& F);
json to_json(const BandResult& band);
json to_json(const AssumptionReport& rep);
json to_json(const CoverageReport& rep);
json to_json(const ComplianceShares& s);

// Basis from {"covariates": [...], "degree": 1, "interact_d_x": false, "z_mode": "saturated"};
// covariate names are resolved against `columns` (the x columns of the dataset).
BasisSpec basis_from_json(const json& j, const std::vector<std::string>& columns);
json to_json(const BasisSpec& b, const std::vector<std::string>& columns);

void write_band_csv(const BandResult& band, const std::string& path);
void write_json(const json& j, const std::string& path);
json read_json(const std::string& path);

std::uint64_t fnv1a(const std::string& s);
// Replay record: command, version, seed and the fully resolved configuration.
json manifest(const std::string& command, const json& resolved_config, std::uint64_t seed);

}  // namespace copiv

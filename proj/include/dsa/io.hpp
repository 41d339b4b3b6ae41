#pragma once

#include "dsa/analysis.hpp"
#include "dsa/constants.hpp"
#include "dsa/engine.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>

namespace dsa {

using Json = nlohmann::ordered_json;

/// Columns: t, gamma, h_bar_sq, grad_sq, cons_err, V, [e0, e1, res_c, res_o, res_d], max_dev, dev_1..dev_n.
void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& record);
/// Restores rows, agent count, horizon (last t) and the diagnostics flag. Seeds and tau are not stored.
TrajectoryRecord read_trajectory_csv(std::istream& in);
TrajectoryRecord load_trajectory_csv(const std::string& path);

Json to_json(const ConstantsBundle& c);
ConstantsBundle constants_from_json(const Json& j);

Json to_json(const BoundCertificate& cert);
Json to_json(const MeanSe& m);
Json to_json(const StepSchedule& s);
Json to_json(const EnsembleResult& e);
Json to_json(const VerificationReport& r);
Json to_json(const RateFit& f);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

/// 64-bit FNV-1a, used to fingerprint configurations.
std::uint64_t fnv1a(const std::string& text);

}  // namespace dsa

#pragma once

#include "grasp/config.hpp"
#include "grasp/harness.hpp"

#include <string>
#include <vector>

namespace grasp {

Json to_json(const DiagnosticReport& r);
Json to_json(const MethodRow& r);
Json to_json(const KappaRow& r);
Json to_json(const PoolRow& r);
Json to_json(const CostEstimate& c);
Json to_json(const GradCheckRow& r);

/// Staircase decomposition: Method, Obj. R@1, Attr. R@1, Rel. R@1, Cap. R@1,
/// Ret. Avg., Obj. Neg., Attr. Neg., Rel. Neg., Full Neg., Hard Avg., Staircase.
std::string staircase_csv(const std::vector<std::pair<std::string, DiagnosticReport>>& rows);
/// Emergence decomposition: Method, Attr., Relation, Action, Order, Full, Mean.
std::string emergence_csv(const std::vector<std::pair<std::string, DiagnosticReport>>& rows);
/// Sel(k, r) grid and R@1(k, view) grid of one report.
std::string sel_csv(const DiagnosticReport& r);
std::string recall_csv(const DiagnosticReport& r);

/// Method, Stair., Emerg., Cap. R@1, Hard Avg., Drift, Params.
std::string methods_csv(const std::vector<MethodRow>& rows);
std::string kappa_csv(const std::vector<KappaRow>& rows);
std::string pool_csv(const std::vector<PoolRow>& rows);

/// Rebuilds the columns the CSV writers need from a report document.
DiagnosticReport report_from_json(const Json& j);

}  // namespace grasp

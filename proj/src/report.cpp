#include "grasp/report.hpp"

#include <cstdio>
#include <sstream>

namespace grasp {

namespace {

std::string fixed2(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string sci(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.1e", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from(const Json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != static_cast<std::size_t>(cols)) throw Error(ErrorCode::kMalformed, "ragged table in report");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = j[r][static_cast<std::size_t>(c)];
  }
  return m;
}

Json drift_json(const Drift& d) { return {{"max_abs", d.max_abs}, {"pairs", d.pairs}, {"exhaustive", d.exhaustive}}; }

}  // namespace

Json to_json(const DiagnosticReport& r) {
  Json j;
  j["contract"] = to_json(r.contract);
  j["recall"] = matrix_json(r.recall);
  j["sel"] = matrix_json(r.sel.values);
  j["ret_avg"] = r.staircase.ret_avg;
  j["hard_avg"] = r.staircase.hard_avg;
  j["stair"] = r.staircase.stair;
  j["contract_hard_avg"] = r.contract_hard_avg;
  j["leakage"] = optional_number(r.leakage);
  Json emerg = Json::object();
  for (NegType t : kAllNegTypes) emerg[std::string(to_string(t))] = optional_number(r.emergence.per_type[index(t)]);
  j["emergence"] = emerg;
  j["emergence_mean"] = r.emergence.mean;
  j["drift"] = drift_json(r.drift);
  j["drift_raw"] = drift_json(r.drift_raw);
  if (r.rank) {
    j["rank"] = {{"purity_at_10", r.rank->purity_at_10},       {"category_map", r.rank->category_map},
                 {"median_rank", r.rank->median_rank},         {"recall_at_1", r.rank->recall_at_1},
                 {"same_label_recall_at_1", r.rank->same_label_recall_at_1}};
  }
  return j;
}

DiagnosticReport report_from_json(const Json& j) {
  DiagnosticReport r;
  try {
    const Json& c = j.at("contract");
    const auto prefixes = c.at("prefix_set").get<std::vector<int>>();
    if (prefixes.empty()) throw Error(ErrorCode::kMalformed, "report has no prefixes");
    r.contract = contract_from_json(c, prefixes.back());
    r.recall = matrix_from(j.at("recall"), kNumViews);
    r.sel.prefixes = r.contract.prefixes;
    r.sel.values = matrix_from(j.at("sel"), kNumNegTypes);
    r.staircase = {j.at("ret_avg"), j.at("hard_avg"), j.at("stair")};
    r.contract_hard_avg = j.at("contract_hard_avg");
    if (!j.at("leakage").is_null()) r.leakage = j.at("leakage").get<double>();
    for (NegType t : kAllNegTypes) {
      const Json& e = j.at("emergence").at(std::string(to_string(t)));
      if (!e.is_null()) r.emergence.per_type[index(t)] = e.get<double>();
    }
    r.emergence.mean = j.at("emergence_mean");
    r.drift.max_abs = j.at("drift").at("max_abs");
    r.drift_raw.max_abs = j.at("drift_raw").at("max_abs");
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kMalformed, std::string("report: ") + e.what());
  }
  return r;
}

Json to_json(const MethodRow& r) {
  Json j = {{"method", r.name},          {"stair", r.stair},   {"emergence_mean", optional_number(r.emergence_mean)},
            {"caption_r1", r.caption_r1}, {"hard_avg", r.hard_avg}, {"drift", r.drift},
            {"params", r.params},        {"full_caption_r1", r.full_caption_r1}};
  j["selected_epoch"] = r.selected_epoch ? Json(*r.selected_epoch) : Json(nullptr);
  return j;
}

Json to_json(const KappaRow& r) {
  return {{"setting", r.name},
          {"attribute_kappa", r.attribute_kappa},
          {"relation_kappa", r.relation_kappa},
          {"contract_hard_avg", r.contract_hard_avg},
          {"leakage", optional_number(r.leakage)},
          {"default_stair", r.default_stair},
          {"hard_avg", r.hard_avg},
          {"caption_r1", r.caption_r1},
          {"drift", r.drift}};
}

Json to_json(const PoolRow& r) {
  return {{"pool", std::string(to_string(r.pool))},
          {"recall", r.recall},
          {"hard", r.hard},
          {"ret_avg", r.staircase.ret_avg},
          {"hard_avg", r.staircase.hard_avg},
          {"stair", r.staircase.stair}};
}

Json to_json(const CostEstimate& c) {
  Json storage = Json::array();
  for (const auto& [k, bytes] : c.storage_bytes) storage.push_back({{"prefix", k}, {"bytes", bytes}});
  return {{"dim", c.dim},           {"gallery", c.gallery}, {"query_ops", c.query_ops},
          {"offline_ops", c.offline_ops}, {"storage", storage}, {"params", c.params}};
}

Json to_json(const GradCheckRow& r) {
  return {{"variant", r.variant},
          {"term", r.term},
          {"max_relative_error", r.max_relative_error},
          {"coordinates", r.coordinates}};
}

std::string staircase_csv(const std::vector<std::pair<std::string, DiagnosticReport>>& rows) {
  std::ostringstream out;
  out << "Method,Obj. R@1,Attr. R@1,Rel. R@1,Cap. R@1,Ret. Avg.,Obj. Neg.,Attr. Neg.,Rel. Neg.,Full Neg.,Hard Avg.,"
         "Staircase\n";
  for (const auto& [name, r] : rows) {
    out << csv_field(name);
    for (int v = 0; v < kNumViews; ++v) {
      const int k = *r.contract.assigned_prefix(static_cast<ViewLevel>(v));
      out << ',' << fixed2(r.recall(r.contract.position(k), v));
    }
    out << ',' << fixed2(r.staircase.ret_avg);
    for (double h : hard_cells(r.sel, r.contract)) out << ',' << fixed2(h);
    out << ',' << fixed2(r.staircase.hard_avg) << ',' << fixed2(r.staircase.stair) << '\n';
  }
  return out.str();
}

std::string emergence_csv(const std::vector<std::pair<std::string, DiagnosticReport>>& rows) {
  std::ostringstream out;
  out << "Method,Attr.,Relation,Action,Order,Full,Mean\n";
  for (const auto& [name, r] : rows) {
    out << csv_field(name);
    for (NegType t : {NegType::kAttribute, NegType::kRelation, NegType::kAction, NegType::kOrder, NegType::kFull}) {
      const auto& e = r.emergence.per_type[index(t)];
      out << ',' << (e ? fixed2(*e) : std::string());
    }
    out << ',' << fixed2(r.emergence.mean) << '\n';
  }
  return out.str();
}

std::string sel_csv(const DiagnosticReport& r) {
  std::ostringstream out;
  out << "prefix";
  for (NegType t : kAllNegTypes) out << ',' << to_string(t);
  out << '\n';
  for (std::size_t p = 0; p < r.sel.prefixes.size(); ++p) {
    out << r.sel.prefixes[p];
    for (int t = 0; t < kNumNegTypes; ++t) out << ',' << fixed2(r.sel.values(static_cast<Eigen::Index>(p), t));
    out << '\n';
  }
  return out.str();
}

std::string recall_csv(const DiagnosticReport& r) {
  std::ostringstream out;
  out << "prefix,G0,G1,G2,G3\n";
  for (std::size_t p = 0; p < r.contract.size(); ++p) {
    out << r.contract.prefixes[p];
    for (int v = 0; v < kNumViews; ++v) out << ',' << fixed2(r.recall(static_cast<Eigen::Index>(p), v));
    out << '\n';
  }
  return out.str();
}

std::string methods_csv(const std::vector<MethodRow>& rows) {
  std::ostringstream out;
  out << "Method,Stair.,Emerg.,Cap. R@1,Hard Avg.,Drift,Params,Cap. R@1 (k=D),Epoch\n";
  for (const auto& r : rows) {
    out << csv_field(r.name) << ',' << fixed2(r.stair) << ',' << (r.emergence_mean ? fixed2(*r.emergence_mean) : "")
        << ',' << fixed2(r.caption_r1) << ',' << fixed2(r.hard_avg) << ',' << sci(r.drift) << ',' << r.params << ','
        << fixed2(r.full_caption_r1) << ',' << (r.selected_epoch ? std::to_string(*r.selected_epoch) : "") << '\n';
  }
  return out.str();
}

std::string kappa_csv(const std::vector<KappaRow>& rows) {
  std::ostringstream out;
  out << "Setting,Attr. kappa,Rel. kappa,Contract Hard Avg.,Pre-kappa Leak.,Default Stair.,Hard Avg.,Cap. R@1,Drift\n";
  for (const auto& r : rows) {
    out << csv_field(r.name) << ',' << r.attribute_kappa << ',' << r.relation_kappa << ','
        << fixed2(r.contract_hard_avg) << ',' << (r.leakage ? fixed2(*r.leakage) : "") << ','
        << fixed2(r.default_stair) << ',' << fixed2(r.hard_avg) << ',' << fixed2(r.caption_r1) << ','
        << sci(r.drift) << '\n';
  }
  return out.str();
}

std::string pool_csv(const std::vector<PoolRow>& rows) {
  std::ostringstream out;
  out << "Pool,Obj. R@1,Attr. R@1,Rel. R@1,Cap. R@1,Ret. Avg.,Obj. Neg.,Attr. Neg.,Rel. Neg.,Full Neg.,Hard Avg.,"
         "Staircase\n";
  for (const auto& r : rows) {
    out << to_string(r.pool);
    for (double v : r.recall) out << ',' << fixed2(v);
    out << ',' << fixed2(r.staircase.ret_avg);
    for (double v : r.hard) out << ',' << fixed2(v);
    out << ',' << fixed2(r.staircase.hard_avg) << ',' << fixed2(r.staircase.stair) << '\n';
  }
  return out.str();
}

}  // namespace grasp

#include "fisher/io.hpp"

#include <json.hpp>

namespace fisher {

using nlohmann::json;

std::string instance_to_json(const MarketInstance& inst) {
  json j;
  j["n"] = inst.n;
  j["m"] = inst.m();
  j["budgets"] = inst.budgets;
  json utils = json::array();
  for (const UtilitySpec& u : inst.utilities) {
    json ju;
    if (const auto* c = std::get_if<Ces>(&u.kind)) {
      ju["kind"] = "ces";
      ju["param"] = c->rho;
    } else if (const auto* a = std::get_if<AdditiveHomogeneous>(&u.kind)) {
      ju["kind"] = "additive";
      ju["param"] = {a->k, a->r};
    } else {
      ju["kind"] = "linear_barrier";
      ju["param"] = std::get<LinearBarrier>(u.kind).sigma;
    }
    json entries = json::array();
    for (const SparseEntry& e : u.coefficients) entries.push_back({e.index, e.value});
    ju["entries"] = std::move(entries);
    utils.push_back(std::move(ju));
  }
  j["utilities"] = std::move(utils);
  if (inst.has_constraints()) {
    json cons = json::array();
    for (const auto& a : inst.constraints) {
      if (!a || a->rows() == 0) {
        cons.push_back(nullptr);
        continue;
      }
      json rows = json::array();
      for (Eigen::Index r = 0; r < a->rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(a->cols()));
        for (Eigen::Index c = 0; c < a->cols(); ++c) row[static_cast<std::size_t>(c)] = (*a)(r, c);
        rows.push_back(std::move(row));
      }
      cons.push_back(std::move(rows));
    }
    j["constraints"] = std::move(cons);
  }
  return j.dump(1) + "\n";
}

MarketInstance instance_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MarketError(std::string("instance JSON: ") + e.what());
  }
  MarketInstance inst;
  try {
    inst.n = j.at("n").get<int>();
    inst.budgets = j.at("budgets").get<std::vector<double>>();
    const auto& utils = j.at("utilities");
    if (j.contains("m") && j["m"].get<int>() != static_cast<int>(utils.size()))
      throw MarketError("instance JSON: m does not match utilities length");
    for (const auto& ju : utils) {
      UtilitySpec u;
      const auto kind = ju.at("kind").get<std::string>();
      const auto& param = ju.at("param");
      if (kind == "ces") {
        u.kind = Ces{param.get<double>()};
      } else if (kind == "additive") {
        u.kind = AdditiveHomogeneous{param.at(0).get<double>(), param.at(1).get<double>()};
      } else if (kind == "linear_barrier") {
        u.kind = LinearBarrier{param.get<double>()};
      } else {
        throw MarketError("instance JSON: unknown utility kind '" + kind + "'");
      }
      for (const auto& e : ju.at("entries")) u.coefficients.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
      inst.utilities.push_back(std::move(u));
    }
    if (j.contains("constraints") && !j["constraints"].is_null()) {
      for (const auto& jc : j["constraints"]) {
        if (jc.is_null()) {
          inst.constraints.emplace_back(std::nullopt);
          continue;
        }
        Mat a(static_cast<Eigen::Index>(jc.size()), inst.n);
        for (std::size_t r = 0; r < jc.size(); ++r) {
          const auto row = jc[r].get<std::vector<double>>();
          if (static_cast<int>(row.size()) != inst.n)
            throw MarketError("instance JSON: constraint row length differs from n");
          for (int c = 0; c < inst.n; ++c) a(static_cast<Eigen::Index>(r), c) = row[static_cast<std::size_t>(c)];
        }
        inst.constraints.emplace_back(std::move(a));
      }
    }
  } catch (const json::exception& e) {
    throw MarketError(std::string("instance JSON: ") + e.what());
  }
  return inst;
}

void write_instance(const std::string& path, const MarketInstance& inst) {
  write_file_atomic(path, instance_to_json(inst));
}

MarketInstance read_instance(const std::string& path) { return instance_from_json(read_file(path)); }

}  // namespace fisher

#include "capstone/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "capstone/errors.hpp"
#include "json.hpp"

namespace capstone::model {

namespace {

using Json = nlohmann::ordered_json;

double round12(double v) {
  if (!std::isfinite(v)) throw InputError("non-finite number in model");
  return std::stod(fmt::format("{:.12g}", v));
}

void collect_cells(const peaks::Visit& v, CellSet& out) {
  out.insert(v.roi_cells.begin(), v.roi_cells.end());
  for (const auto& s : v.sub_visits) collect_cells(s, out);
}

std::size_t count_sub_visits(const peaks::Visit& v) {
  std::size_t n = v.sub_visits.size();
  for (const auto& s : v.sub_visits) n += count_sub_visits(s);
  return n;
}

struct WorkingRoi {
  CellSet cells;
  bool alive = true;
  std::size_t first_visit = 0;
};

}  // namespace

double dice(const CellSet& a, const CellSet& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) ++i;
    else if (*j < *i) ++j;
    else {
      ++common;
      ++i;
      ++j;
    }
  }
  return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

Assembly assemble(const std::vector<peaks::Visit>& visits, int level) {
  std::vector<WorkingRoi> work;
  std::vector<int> owner(visits.size(), -1);
  std::vector<bool> nested(visits.size(), false);

  // Follows merges to the surviving ROI.
  std::vector<int> forward;
  const auto resolve = [&](int r) {
    while (forward[static_cast<std::size_t>(r)] != r) r = forward[static_cast<std::size_t>(r)];
    return r;
  };
  const auto absorb = [&](const CellSet& cells, std::size_t visit, std::optional<int> into) {
    std::vector<int> hits;
    if (into) hits.push_back(*into);
    for (std::size_t r = 0; r < work.size(); ++r) {
      if (!work[r].alive || (into && static_cast<int>(r) == *into)) continue;
      if (dice(work[r].cells, cells) > 0.0) hits.push_back(static_cast<int>(r));
    }
    if (hits.empty()) {
      work.push_back({cells, true, visit});
      forward.push_back(static_cast<int>(work.size() - 1));
      return static_cast<int>(work.size() - 1);
    }
    std::sort(hits.begin(), hits.end());
    const int keep = hits.front();
    auto& dst = work[static_cast<std::size_t>(keep)];
    dst.cells.insert(cells.begin(), cells.end());
    for (std::size_t k = 1; k < hits.size(); ++k) {
      auto& src = work[static_cast<std::size_t>(hits[k])];
      dst.cells.insert(src.cells.begin(), src.cells.end());
      dst.first_visit = std::min(dst.first_visit, src.first_visit);
      src.alive = false;
      src.cells.clear();
      forward[static_cast<std::size_t>(hits[k])] = keep;
    }
    return keep;
  };

  std::optional<std::size_t> parent;
  for (std::size_t t = 0; t < visits.size(); ++t) {
    const auto& v = visits[t];
    CellSet cells;
    collect_cells(v, cells);
    if (parent && v.entry_time >= visits[*parent].entry_time && v.exit_time <= visits[*parent].exit_time) {
      nested[t] = true;
      owner[t] = absorb(cells, t, resolve(owner[*parent]));
      continue;
    }
    owner[t] = absorb(cells, t, std::nullopt);
    parent = t;
  }

  // Dense ids in order of first appearance.
  std::vector<int> order;
  for (std::size_t r = 0; r < work.size(); ++r)
    if (work[r].alive) order.push_back(static_cast<int>(r));
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return work[static_cast<std::size_t>(a)].first_visit < work[static_cast<std::size_t>(b)].first_visit;
  });
  std::map<int, int> dense;
  for (std::size_t k = 0; k < order.size(); ++k) dense[order[k]] = static_cast<int>(k);

  Assembly out;
  out.nested = nested;
  out.rois.resize(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& roi = out.rois[k];
    roi.id = static_cast<int>(k);
    roi.cells = work[static_cast<std::size_t>(order[k])].cells;
    roi.area_m2 = geo::average_area_m2(level) * static_cast<double>(roi.cells.size());
  }
  out.assignment.resize(visits.size());
  std::vector<double> stay(order.size(), 0.0);
  for (std::size_t t = 0; t < visits.size(); ++t) {
    const int id = dense.at(resolve(owner[t]));
    out.assignment[t] = id;
    auto& roi = out.rois[static_cast<std::size_t>(id)];
    const auto& v = visits[t];
    roi.sub_visit_count += count_sub_visits(v);
    if (nested[t]) {
      ++roi.sub_visit_count;
      continue;
    }
    if (roi.visit_count == 0) {
      roi.first_entry = v.entry_time;
      roi.last_exit = v.exit_time;
    }
    ++roi.visit_count;
    roi.first_entry = std::min(roi.first_entry, v.entry_time);
    roi.last_exit = std::max(roi.last_exit, v.exit_time);
    stay[static_cast<std::size_t>(id)] += v.exit_time - v.entry_time;
    if (v.basecamp && !out.basecamp_id) out.basecamp_id = id;
  }
  for (std::size_t k = 0; k < out.rois.size(); ++k)
    if (out.rois[k].visit_count > 0) out.rois[k].mean_stay_s = stay[k] / static_cast<double>(out.rois[k].visit_count);
  return out;
}

std::vector<geo::CellId> representative_path(const std::vector<std::vector<geo::CellId>>& paths) {
  if (paths.empty()) throw InputError("representative path needs at least one observed path");
  std::vector<const std::vector<geo::CellId>*> usable;
  for (const auto& p : paths)
    if (!p.empty()) usable.push_back(&p);
  if (usable.empty()) return {};
  std::vector<std::size_t> lengths;
  for (const auto* p : usable) lengths.push_back(p->size());
  std::sort(lengths.begin(), lengths.end());
  const std::size_t k = lengths[(lengths.size() - 1) / 2];

  std::vector<geo::CellId> out;
  for (std::size_t s = 0; s < k; ++s) {
    const double f = k == 1 ? 0.0 : static_cast<double>(s) / static_cast<double>(k - 1);
    std::map<std::uint64_t, std::pair<std::size_t, geo::CellId>> votes;  // keyed by rank
    for (const auto* p : usable) {
      const auto idx = static_cast<std::size_t>(std::llround(f * static_cast<double>(p->size() - 1)));
      const auto c = (*p)[idx];
      auto& slot = votes[geo::rank(c)];
      slot.first += 1;
      slot.second = c;
    }
    std::size_t best = 0;
    geo::CellId pick;
    for (const auto& [r, vote] : votes)
      if (vote.first > best) {
        best = vote.first;
        pick = vote.second;
      }
    if (out.empty() || out.back() != pick) out.push_back(pick);
  }
  return out;
}

std::vector<Transition> transition_matrix(std::span<const int> sequence) {
  std::map<std::pair<int, int>, std::size_t> counts;
  std::map<int, std::size_t> rows;
  for (std::size_t t = 1; t < sequence.size(); ++t) {
    ++counts[{sequence[t - 1], sequence[t]}];
    ++rows[sequence[t - 1]];
  }
  std::vector<Transition> out;
  for (const auto& [key, c] : counts) {
    Transition tr;
    tr.from = key.first;
    tr.to = key.second;
    tr.count = c;
    tr.probability = static_cast<double>(c) / static_cast<double>(rows[key.first]);
    out.push_back(tr);
  }
  return out;
}

MobilityModel build_model(const std::vector<peaks::Visit>& visits, int level) {
  const auto assembly = assemble(visits, level);
  MobilityModel model;
  model.level = level;
  model.basecamp_id = assembly.basecamp_id;
  model.rois = assembly.rois;

  std::vector<int> sequence;
  std::vector<std::size_t> top;
  for (std::size_t t = 0; t < visits.size(); ++t)
    if (!assembly.nested[t]) {
      sequence.push_back(assembly.assignment[t]);
      top.push_back(t);
    }
  model.transitions = transition_matrix(sequence);

  std::map<std::pair<int, int>, std::vector<std::vector<geo::CellId>>> observed;
  for (std::size_t k = 1; k < top.size(); ++k) {
    const auto& a = visits[top[k - 1]];
    const auto& b = visits[top[k]];
    std::vector<geo::CellId> path;
    const auto push = [&](geo::CellId c) {
      if (c.raw() != 0 && (path.empty() || path.back() != c)) path.push_back(c);
    };
    push(a.exit_cell);
    for (const auto c : a.transition_out) push(c);
    for (const auto c : b.transition_in) push(c);
    push(b.entry_cell);
    observed[{sequence[k - 1], sequence[k]}].push_back(std::move(path));
  }
  for (auto& tr : model.transitions) tr.path = representative_path(observed.at({tr.from, tr.to}));
  return model;
}

std::string serialize(const MobilityModel& model) {
  Json doc;
  doc["level"] = model.level;
  doc["basecamp"] = model.basecamp_id ? Json(*model.basecamp_id) : Json(nullptr);
  doc["rois"] = Json::array();
  for (const auto& r : model.rois) {
    Json cells = Json::array();
    for (const auto c : r.cells) cells.push_back(c.to_hex());
    Json stats;
    stats["area_m2"] = round12(r.area_m2);
    stats["visit_count"] = r.visit_count;
    stats["sub_visit_count"] = r.sub_visit_count;
    stats["mean_stay_s"] = round12(r.mean_stay_s);
    stats["first_entry"] = round12(r.first_entry);
    stats["last_exit"] = round12(r.last_exit);
    doc["rois"].push_back(Json{{"id", r.id}, {"cells", cells}, {"stats", stats}});
  }
  doc["transitions"] = Json::array();
  for (const auto& t : model.transitions) {
    Json path = Json::array();
    for (const auto c : t.path) path.push_back(c.to_hex());
    doc["transitions"].push_back(
        Json{{"from", t.from}, {"to", t.to}, {"path", path}, {"p", round12(t.probability)}, {"count", t.count}});
  }
  return doc.dump(2) + "\n";
}

MobilityModel deserialize(const std::string& document) {
  Json doc;
  try {
    doc = Json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(fmt::format("model document is not valid JSON: {}", e.what()));
  }
  const auto need = [](const Json& obj, const char* key, const char* where) -> const Json& {
    if (!obj.is_object() || !obj.contains(key)) throw InputError(fmt::format("model: {} is missing '{}'", where, key));
    return obj.at(key);
  };
  const auto as_int = [](const Json& v, const char* what) {
    if (!v.is_number_integer()) throw InputError(fmt::format("model: {} must be an integer", what));
    return v.get<long long>();
  };
  const auto as_num = [](const Json& v, const char* what) {
    if (!v.is_number()) throw InputError(fmt::format("model: {} must be a number", what));
    return v.get<double>();
  };

  MobilityModel m;
  const auto level = as_int(need(doc, "level", "document"), "level");
  if (level < 0 || level > geo::kMaxLevel) throw InputError(fmt::format("model: level {} out of range", level));
  m.level = static_cast<int>(level);
  const auto& base = need(doc, "basecamp", "document");
  if (!base.is_null()) m.basecamp_id = static_cast<int>(as_int(base, "basecamp"));

  const auto cell_of = [&](const Json& v) {
    if (!v.is_string()) throw InputError("model: cell ids must be hex strings");
    const auto c = geo::CellId::from_hex(v.get<std::string>());
    if (c.level() != m.level)
      throw InputError(fmt::format("model: cell {} is level {}, document says {}", c.to_hex(), c.level(), m.level));
    return c;
  };

  const auto& rois = need(doc, "rois", "document");
  if (!rois.is_array()) throw InputError("model: rois must be an array");
  CellSet seen;
  for (const auto& jr : rois) {
    Roi r;
    r.id = static_cast<int>(as_int(need(jr, "id", "roi"), "roi id"));
    const auto& cells = need(jr, "cells", "roi");
    if (!cells.is_array() || cells.empty()) throw InputError(fmt::format("model: roi {} has no cells", r.id));
    for (const auto& jc : cells) {
      const auto c = cell_of(jc);
      if (!seen.insert(c).second) throw InputError(fmt::format("model: cell {} belongs to two ROIs", c.to_hex()));
      r.cells.insert(c);
    }
    const auto& st = need(jr, "stats", "roi");
    r.area_m2 = as_num(need(st, "area_m2", "stats"), "area_m2");
    r.visit_count = static_cast<std::size_t>(as_int(need(st, "visit_count", "stats"), "visit_count"));
    r.sub_visit_count = static_cast<std::size_t>(as_int(need(st, "sub_visit_count", "stats"), "sub_visit_count"));
    r.mean_stay_s = as_num(need(st, "mean_stay_s", "stats"), "mean_stay_s");
    r.first_entry = as_num(need(st, "first_entry", "stats"), "first_entry");
    r.last_exit = as_num(need(st, "last_exit", "stats"), "last_exit");
    m.rois.push_back(std::move(r));
  }
  std::set<int> ids;
  for (const auto& r : m.rois)
    if (!ids.insert(r.id).second) throw InputError(fmt::format("model: duplicate roi id {}", r.id));
  if (m.basecamp_id && !ids.count(*m.basecamp_id)) throw InputError("model: basecamp is not a known roi");

  const auto& trs = need(doc, "transitions", "document");
  if (!trs.is_array()) throw InputError("model: transitions must be an array");
  for (const auto& jt : trs) {
    Transition t;
    t.from = static_cast<int>(as_int(need(jt, "from", "transition"), "from"));
    t.to = static_cast<int>(as_int(need(jt, "to", "transition"), "to"));
    if (!ids.count(t.from) || !ids.count(t.to)) throw InputError("model: transition refers to an unknown roi");
    const auto& path = need(jt, "path", "transition");
    if (!path.is_array()) throw InputError("model: path must be an array");
    for (const auto& jc : path) t.path.push_back(cell_of(jc));
    t.probability = as_num(need(jt, "p", "transition"), "p");
    if (t.probability < 0.0 || t.probability > 1.0) throw InputError("model: probability outside [0, 1]");
    t.count = static_cast<std::size_t>(as_int(need(jt, "count", "transition"), "count"));
    m.transitions.push_back(std::move(t));
  }
  return m;
}

}  // namespace capstone::model

#include "joinrl/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace joinrl {

using nlohmann::json;

const ColumnStats* TableStats::find_column(std::string_view column) const {
  for (const auto& c : columns) {
    if (c.name == column) return &c;
  }
  return nullptr;
}

Catalog::Catalog(std::vector<TableStats> tables) : tables_(std::move(tables)) {
  std::size_t offset = 0;
  for (std::size_t i = 0; i < tables_.size(); ++i) {
    auto& t = tables_[i];
    if (t.name.empty()) throw config_error("catalog: empty table name");
    if (!index_.emplace(t.name, i).second) {
      throw config_error("catalog: duplicate table name '" + t.name + "'");
    }
    std::set<std::string_view> seen;
    for (const auto& c : t.columns) {
      if (c.distinct_count < 1) {
        throw config_error("catalog: table '" + t.name + "' column '" + c.name +
                           "': distinct_count must be >= 1");
      }
      if (!seen.insert(c.name).second) {
        throw config_error("catalog: table '" + t.name + "' has duplicate column '" + c.name +
                           "'");
      }
    }
    t.global_column_offset = offset;
    offset += t.columns.size();
  }
  total_columns_ = offset;
}

bool Catalog::has_table(std::string_view name) const {
  return index_.find(std::string(name)) != index_.end();
}

const TableStats& Catalog::table(std::string_view name) const {
  return tables_[table_index(name)];
}

std::size_t Catalog::table_index(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw config_error("unknown table '" + std::string(name) + "'");
  return it->second;
}

std::string Catalog::canonical_text() const {
  std::string out;
  for (const auto& t : tables_) {
    out += t.name;
    out += ':';
    out += std::to_string(t.row_count);
    for (const auto& c : t.columns) {
      out += ',';
      out += c.name;
      out += '=';
      out += std::to_string(c.distinct_count);
      out += c.indexed ? "i" : "";
    }
    out += ';';
  }
  return out;
}

namespace {

json read_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw config_error(std::string(what) + ": cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw config_error(std::string(what) + ": parse error in '" + path.string() +
                       "': " + e.what());
  }
  return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

Catalog load_catalog(const std::filesystem::path& path) {
  const json j = read_json_file(path, "catalog");
  if (!j.is_object() || !j.contains("tables") || !j["tables"].is_array()) {
    throw config_error("catalog: expected top-level object with a 'tables' array");
  }
  std::vector<TableStats> tables;
  for (const auto& jt : j["tables"]) {
    TableStats t;
    try {
      t.name = jt.at("name").get<std::string>();
      t.row_count = jt.at("row_count").get<std::uint64_t>();
      for (const auto& jc : jt.at("columns")) {
        ColumnStats c;
        c.name = jc.at("name").get<std::string>();
        c.distinct_count = jc.at("distinct_count").get<std::uint64_t>();
        c.indexed = jc.value("indexed", false);
        t.columns.push_back(std::move(c));
      }
    } catch (const json::exception& e) {
      throw config_error("catalog: table entry " + std::to_string(tables.size()) + ": " +
                         e.what());
    }
    tables.push_back(std::move(t));
  }
  return Catalog(std::move(tables));
}

void save_catalog(const Catalog& catalog, const std::filesystem::path& path) {
  json j;
  j["tables"] = json::array();
  for (const auto& t : catalog.tables()) {
    json jt;
    jt["name"] = t.name;
    jt["row_count"] = t.row_count;
    jt["columns"] = json::array();
    for (const auto& c : t.columns) {
      jt["columns"].push_back({{"name", c.name},
                               {"distinct_count", c.distinct_count},
                               {"indexed", c.indexed}});
    }
    j["tables"].push_back(std::move(jt));
  }
  write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Predicates
// ---------------------------------------------------------------------------

std::string JoinPredicate::id() const {
  const std::string l = left.text();
  const std::string r = right.text();
  return l <= r ? l + "=" + r : r + "=" + l;
}

bool JoinPredicate::applies_to(std::span<const std::string> relations) const {
  auto has = [&](const std::string& t) {
    return std::find(relations.begin(), relations.end(), t) != relations.end();
  };
  return has(left.table) && has(right.table);
}

namespace {

ColumnRef parse_column_ref(std::string_view text) {
  const auto dot = text.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == text.size()) {
    throw config_error("invalid column reference '" + std::string(text) +
                       "' (expected table.column)");
  }
  return ColumnRef{std::string(text.substr(0, dot)), std::string(text.substr(dot + 1))};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

JoinPredicate parse_predicate(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    throw config_error("invalid predicate '" + std::string(text) +
                       "' (expected table.column = table.column)");
  }
  JoinPredicate p{parse_column_ref(trim(text.substr(0, eq))),
                  parse_column_ref(trim(text.substr(eq + 1)))};
  if (p.left.table == p.right.table) {
    throw config_error("predicate '" + std::string(text) + "' joins a table with itself");
  }
  return p;
}

std::string subquery_key(std::span<const std::string> sorted_relations,
                         std::span<const JoinPredicate> predicates) {
  std::vector<std::string> ids;
  ids.reserve(predicates.size());
  for (const auto& p : predicates) ids.push_back(p.id());
  std::sort(ids.begin(), ids.end());
  std::string key;
  for (std::size_t i = 0; i < sorted_relations.size(); ++i) {
    if (i) key += ',';
    key += sorted_relations[i];
  }
  key += '|';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) key += ';';
    key += ids[i];
  }
  return key;
}

// ---------------------------------------------------------------------------
// CardinalityProvider
// ---------------------------------------------------------------------------

CardinalityProvider CardinalityProvider::lookup(std::unordered_map<std::string, double> table) {
  CardinalityProvider p;
  p.mode_ = CardinalityMode::Lookup;
  p.lookup_ = std::move(table);
  for (const auto& [k, v] : p.lookup_) {
    if (v < 0) throw config_error("lookup table: negative cardinality for key '" + k + "'");
  }
  return p;
}

double CardinalityProvider::get(const std::string& key) const {
  auto it = lookup_.find(key);
  if (it == lookup_.end()) {
    throw runtime_error("cardinality lookup miss for key '" + key + "'");
  }
  return it->second;
}

CardinalityProvider load_lookup_provider(const std::filesystem::path& path) {
  const json j = read_json_file(path, "cardinality lookup");
  if (!j.is_array()) throw config_error("cardinality lookup: expected a top-level array");
  std::unordered_map<std::string, double> table;
  for (const auto& rec : j) {
    try {
      std::vector<std::string> rels = rec.at("relations").get<std::vector<std::string>>();
      std::vector<std::string> pred_ids =
          rec.value("predicates", std::vector<std::string>{});
      std::sort(rels.begin(), rels.end());
      std::sort(pred_ids.begin(), pred_ids.end());
      std::string key;
      for (std::size_t i = 0; i < rels.size(); ++i) {
        if (i) key += ',';
        key += rels[i];
      }
      key += '|';
      for (std::size_t i = 0; i < pred_ids.size(); ++i) {
        if (i) key += ';';
        key += pred_ids[i];
      }
      table[key] = rec.at("cardinality").get<double>();
    } catch (const json::exception& e) {
      throw config_error(std::string("cardinality lookup: bad record: ") + e.what());
    }
  }
  return CardinalityProvider::lookup(std::move(table));
}

void save_lookup_table(const std::unordered_map<std::string, double>& table,
                       const std::filesystem::path& path) {
  std::vector<std::string> keys;
  keys.reserve(table.size());
  for (const auto& [k, _] : table) keys.push_back(k);
  std::sort(keys.begin(), keys.end());

  json j = json::array();
  for (const auto& key : keys) {
    const auto bar = key.find('|');
    json rec;
    rec["relations"] = json::array();
    std::string_view rels(key.data(), bar);
    while (!rels.empty()) {
      const auto comma = rels.find(',');
      rec["relations"].push_back(std::string(rels.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rels.remove_prefix(comma + 1);
    }
    rec["predicates"] = json::array();
    std::string_view preds(key.data() + bar + 1, key.size() - bar - 1);
    while (!preds.empty()) {
      const auto semi = preds.find(';');
      rec["predicates"].push_back(std::string(preds.substr(0, semi)));
      if (semi == std::string_view::npos) break;
      preds.remove_prefix(semi + 1);
    }
    rec["cardinality"] = table.at(key);
    j.push_back(std::move(rec));
  }
  write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

double estimate_cardinality(std::span<const std::string> relations,
                            std::span<const JoinPredicate> predicates,
                            const CardinalityProvider& provider, const Catalog& catalog) {
  if (relations.empty()) throw config_error("estimate_cardinality: empty relation set");
  for (const auto& p : predicates) {
    if (!p.applies_to(relations)) {
      throw config_error("predicate '" + p.id() + "' references a relation outside the set");
    }
  }

  if (provider.mode() == CardinalityMode::Lookup) {
    std::vector<std::string> sorted(relations.begin(), relations.end());
    std::sort(sorted.begin(), sorted.end());
    return provider.get(subquery_key(sorted, predicates));
  }

  double card = 1.0;
  for (const auto& r : relations) {
    card *= static_cast<double>(catalog.table(r).row_count);
  }
  for (const auto& p : predicates) {
    const ColumnStats* lc = catalog.table(p.left.table).find_column(p.left.column);
    const ColumnStats* rc = catalog.table(p.right.table).find_column(p.right.column);
    if (!lc) throw config_error("unknown column '" + p.left.text() + "'");
    if (!rc) throw config_error("unknown column '" + p.right.text() + "'");
    const double ndv = static_cast<double>(std::max(lc->distinct_count, rc->distinct_count));
    card /= ndv;
  }
  return card;
}

}  // namespace joinrl

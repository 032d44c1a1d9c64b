#include "reloop/io/contrast_io.hpp"

#include <algorithm>
#include <set>

#include "reloop/errors.hpp"

namespace reloop::io {

namespace {

const std::set<std::string> kReserved = {"contrast_id", "z", "y", "p", "yhat_r", "group",
                                         "unit_id"};

std::size_t require_column(const CsvTable& t, const std::string& name) {
  const auto c = t.column(name);
  if (!c) throw DataError("missing required column '" + name + "'");
  return *c;
}

struct RawRow {
  std::string unit_id;
  int z;
  double y;
  std::optional<double> p;
  std::optional<double> yhat_r;
  std::optional<std::string> group;
  std::vector<std::optional<double>> x;
  std::size_t line;
};

}  // namespace

ContrastBatch load_contrasts(const CsvTable& table) {
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      if (table.header[i] == table.header[j]) {
        throw ParseError("duplicate column '" + table.header[j] + "'", 1, j + 1);
      }
    }
  }
  const std::size_t c_id = require_column(table, "contrast_id");
  const std::size_t c_z = require_column(table, "z");
  const std::size_t c_y = require_column(table, "y");
  const auto c_p = table.column("p");
  const auto c_r = table.column("yhat_r");
  const auto c_g = table.column("group");
  const auto c_u = table.column("unit_id");
  std::vector<std::size_t> cov_cols;
  std::vector<std::string> base_names;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (kReserved.count(table.header[j])) continue;
    if (table.header[j].empty()) throw ParseError("empty column name", 1, j + 1);
    cov_cols.push_back(j);
    base_names.push_back(table.header[j]);
  }

  ContrastBatch batch;
  std::vector<std::string> order;
  std::map<std::string, std::vector<RawRow>> groups;
  std::vector<bool> any_missing(cov_cols.size(), false);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.lines[r];
    if (is_missing_cell(row[c_z]) || is_missing_cell(row[c_y])) {
      ++batch.dropped_rows;
      continue;
    }
    RawRow raw;
    raw.line = line;
    const std::string& id = row[c_id];
    if (id.empty()) throw ParseError("column 'contrast_id': empty value", line, c_id + 1);
    const double z = parse_number(row[c_z], line, c_z + 1, "z");
    if (z != 0.0 && z != 1.0) {
      throw ParseError("column 'z': treatment must be 0 or 1, got '" + row[c_z] + "'", line,
                       c_z + 1);
    }
    raw.z = static_cast<int>(z);
    raw.y = parse_number(row[c_y], line, c_y + 1, "y");
    if (c_p && !is_missing_cell(row[*c_p])) raw.p = parse_number(row[*c_p], line, *c_p + 1, "p");
    if (c_r && !is_missing_cell(row[*c_r])) {
      raw.yhat_r = parse_number(row[*c_r], line, *c_r + 1, "yhat_r");
    }
    if (c_g && !is_missing_cell(row[*c_g])) raw.group = row[*c_g];
    raw.unit_id = c_u ? row[*c_u] : std::to_string(r + 1);
    if (raw.unit_id.empty()) throw ParseError("column 'unit_id': empty value", line, *c_u + 1);
    for (std::size_t j = 0; j < cov_cols.size(); ++j) {
      const std::string& cell = row[cov_cols[j]];
      if (is_missing_cell(cell)) {
        raw.x.push_back(std::nullopt);
        any_missing[j] = true;
      } else {
        raw.x.push_back(parse_number(cell, line, cov_cols[j] + 1, base_names[j]));
      }
    }
    auto [it, inserted] = groups.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(std::move(raw));
  }

  batch.covariate_names = base_names;
  for (std::size_t j = 0; j < base_names.size(); ++j) {
    if (any_missing[j]) batch.covariate_names.push_back(base_names[j] + "_missing");
  }

  for (const std::string& id : order) {
    const auto& raws = groups[id];
    std::optional<double> p;
    for (const RawRow& raw : raws) {
      if (!raw.p) continue;
      if (p && *p != *raw.p) {
        throw ParseError("column 'p': contrast '" + id + "' has more than one value", raw.line,
                         *c_p + 1);
      }
      p = raw.p;
    }
    std::vector<std::vector<std::optional<double>>> cells;
    for (const RawRow& raw : raws) cells.push_back(raw.x);
    const CovariateFill fill = fill_missing_covariates(cells, base_names);

    std::vector<UnitRecord> units;
    for (std::size_t i = 0; i < raws.size(); ++i) {
      const RawRow& raw = raws[i];
      UnitRecord u;
      u.unit_id = raw.unit_id;
      u.z = raw.z;
      u.y = raw.y;
      u.yhat_r = raw.yhat_r;
      u.group = raw.group;
      // Base columns first, then the file-wide indicator layout.
      u.x.assign(fill.rows[i].begin(), fill.rows[i].begin() + base_names.size());
      for (std::size_t j = 0; j < base_names.size(); ++j) {
        if (!any_missing[j]) continue;
        const auto pos = std::find(fill.names.begin(), fill.names.end(),
                                   base_names[j] + "_missing");
        u.x.push_back(pos == fill.names.end() ? 0.0 : fill.rows[i][pos - fill.names.begin()]);
      }
      units.push_back(std::move(u));
    }
    try {
      batch.contrasts.emplace_back(id, std::move(units), p.value_or(0.5), batch.covariate_names);
    } catch (const DataError& e) {
      throw DataError("contrast '" + id + "': " + e.what());
    }
  }
  return batch;
}

ContrastBatch load_contrasts_file(const std::string& path) {
  const CsvTable table = read_csv_file(path);
  try {
    return load_contrasts(table);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line(), e.column());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

RemnantPredictions load_remnant_predictions(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  const std::size_t c_id = require_column(t, "contrast_id");
  const std::size_t c_u = require_column(t, "unit_id");
  const std::size_t c_r = require_column(t, "yhat_r");
  RemnantPredictions out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const double v = parse_number(row[c_r], t.lines[r], c_r + 1, "yhat_r");
    if (!out.emplace(std::make_pair(row[c_id], row[c_u]), v).second) {
      throw ParseError(path + ": duplicate prediction for unit '" + row[c_u] + "'", t.lines[r],
                       c_u + 1);
    }
  }
  return out;
}

ContrastDataset attach_remnant(const ContrastDataset& ds, const RemnantPredictions& preds) {
  std::vector<UnitRecord> units(ds.units().begin(), ds.units().end());
  for (UnitRecord& u : units) {
    const auto it = preds.find({ds.contrast_id(), u.unit_id});
    if (it == preds.end()) {
      throw DataError("no remnant prediction for unit '" + u.unit_id + "' of contrast '" +
                      ds.contrast_id() + "'");
    }
    u.yhat_r = it->second;
  }
  return ContrastDataset(ds.contrast_id(), std::move(units), ds.p(), ds.covariate_names());
}

ContrastDataset attach_remnant(const ContrastDataset& ds, const RemnantModel& model) {
  std::vector<std::size_t> cols;
  for (const std::string& name : model.feature_names) {
    const auto& names = ds.covariate_names();
    const auto pos = std::find(names.begin(), names.end(), name);
    if (pos == names.end()) {
      throw DataError("remnant model feature '" + name + "' is not a covariate column");
    }
    cols.push_back(static_cast<std::size_t>(pos - names.begin()));
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(ds.n()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ds.unit(i).x[cols[j]];
    }
  }
  const Eigen::VectorXd pred = predict_remnant(model, X);
  std::vector<UnitRecord> units(ds.units().begin(), ds.units().end());
  for (std::size_t i = 0; i < units.size(); ++i) units[i].yhat_r = pred(static_cast<Eigen::Index>(i));
  return ContrastDataset(ds.contrast_id(), std::move(units), ds.p(), ds.covariate_names());
}

PopulationWeights load_weights(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  const std::size_t c_g = require_column(t, "group");
  const std::size_t c_pi = require_column(t, "pi");
  std::vector<std::pair<std::string, double>> shares;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    shares.emplace_back(t.rows[r][c_g], parse_number(t.rows[r][c_pi], t.lines[r], c_pi + 1, "pi"));
  }
  return PopulationWeights(std::move(shares));
}

RemnantTable load_remnant_table(const std::string& path,
                                const std::vector<std::string>& features) {
  const CsvTable t = read_csv_file(path);
  const std::size_t c_y = require_column(t, "y");
  std::vector<std::size_t> cols;
  RemnantTable out;
  if (features.empty()) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      if (j == c_y) continue;
      cols.push_back(j);
      out.names.push_back(t.header[j]);
    }
  } else {
    for (const std::string& f : features) {
      cols.push_back(require_column(t, f));
      out.names.push_back(f);
    }
  }
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  out.features.resize(n, static_cast<Eigen::Index>(cols.size()));
  out.outcomes.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    const std::size_t line = t.lines[static_cast<std::size_t>(r)];
    out.outcomes(r) = parse_number(row[c_y], line, c_y + 1, "y");
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out.features(r, static_cast<Eigen::Index>(j)) =
          parse_number(row[cols[j]], line, cols[j] + 1, out.names[j]);
    }
  }
  return out;
}

}  // namespace reloop::io

#include <algorithm>
#include <sstream>

#include "hit/embeddings.hpp"
#include "hit/image_io.hpp"

namespace hit {

std::string_view gene_column(Gene g) noexcept {
  switch (g) {
    case Gene::ZEB1: return "zeb1";
    case Gene::ZEB2: return "zeb2";
    case Gene::SNAI1: return "snai1";
    case Gene::SNAI2: return "snai2";
    case Gene::CDH1: return "cdh1";
    case Gene::MYC: return "myc";
  }
  return "";
}

void LabelTable::add(CaseLabels labels) {
  require(!labels.case_id.empty(), Errc::FormatError, "empty case id");
  require(!contains(labels.case_id), Errc::FormatError,
          "duplicate case id '" + labels.case_id + "'");
  cases_.push_back(std::move(labels));
}

bool LabelTable::contains(const std::string& case_id) const {
  return std::any_of(cases_.begin(), cases_.end(),
                     [&](const CaseLabels& c) { return c.case_id == case_id; });
}

const CaseLabels& LabelTable::at(const std::string& case_id) const {
  for (const auto& c : cases_) {
    if (c.case_id == case_id) return c;
  }
  fail(Errc::UnknownCase, "unknown case '" + case_id + "'");
}

std::optional<std::string> LabelTable::case_for_slide(const std::string& slide_id) const {
  std::optional<std::string> best;
  for (const auto& c : cases_) {
    if (c.case_id == slide_id) return c.case_id;
    if (slide_id.starts_with(c.case_id) && (!best || c.case_id.size() > best->size())) best = c.case_id;
  }
  return best;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<int> parse_flag(const std::string& cell, const std::string& column, int line_no) {
  if (cell.empty() || cell == "NA" || cell == "na" || cell == "NaN") return std::nullopt;
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  fail(Errc::FormatError, "line " + std::to_string(line_no) + ": column '" + column +
                              "' must be 0, 1 or empty, got '" + cell + "'");
}

}  // namespace

LabelTable LabelTable::parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto case_col = column("case_id");
  require(case_col.has_value(), Errc::FormatError, "label table needs a case_id column");
  const auto bcr_col = column("bcr");
  std::array<std::optional<std::size_t>, kGeneCount> gene_cols;
  for (std::size_t g = 0; g < kGeneCount; ++g) gene_cols[g] = column(gene_column(static_cast<Gene>(g)));

  LabelTable table;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    auto cell = [&](std::optional<std::size_t> col) -> std::string {
      return col && *col < cells.size() ? cells[*col] : std::string{};
    };
    CaseLabels c;
    c.case_id = cell(case_col);
    c.bcr = parse_flag(cell(bcr_col), "bcr", line_no);
    for (std::size_t g = 0; g < kGeneCount; ++g) {
      c.gains[g] = parse_flag(cell(gene_cols[g]), std::string(gene_column(static_cast<Gene>(g))), line_no);
    }
    table.add(std::move(c));
  }
  return table;
}

LabelTable LabelTable::read_csv(const std::filesystem::path& path) {
  return parse_csv(io::read_text(path));
}

std::string LabelTable::to_csv() const {
  std::ostringstream out;
  out << "case_id,bcr,zeb1,zeb2,snai1,snai2,cdh1,myc\n";
  auto flag = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string{}; };
  for (const auto& c : cases_) {
    out << c.case_id << ',' << flag(c.bcr);
    for (const auto& g : c.gains) out << ',' << flag(g);
    out << '\n';
  }
  return out.str();
}

DerivedLabel derive_emt_label(const LabelTable& table, const std::string& case_id) {
  const auto& c = table.at(case_id);
  DerivedLabel out;
  for (auto g : {Gene::ZEB1, Gene::ZEB2, Gene::SNAI1, Gene::SNAI2, Gene::CDH1}) {
    const auto& flag = c.gains[static_cast<std::size_t>(g)];
    if (!flag) {
      out.warnings.push_back("case '" + case_id + "': missing " + std::string(gene_column(g)) +
                             " flag treated as no gain");
      continue;
    }
    if (*flag == 1) out.value = 1;
  }
  return out;
}

std::string_view label_kind_name(LabelKind kind) noexcept {
  switch (kind) {
    case LabelKind::Bcr: return "bcr";
    case LabelKind::Emt: return "emt";
    case LabelKind::Myc: return "myc";
  }
  return "";
}

LabelKind parse_label_kind(std::string_view name) {
  if (name == "bcr") return LabelKind::Bcr;
  if (name == "emt") return LabelKind::Emt;
  if (name == "myc") return LabelKind::Myc;
  fail(Errc::ConfigError, "unknown label kind '" + std::string(name) + "'");
}

std::optional<int> case_label(const LabelTable& table, const std::string& case_id, LabelKind kind,
                              std::vector<std::string>* warnings) {
  const auto& c = table.at(case_id);
  switch (kind) {
    case LabelKind::Bcr:
      return c.bcr;
    case LabelKind::Emt: {
      auto d = derive_emt_label(table, case_id);
      if (warnings) warnings->insert(warnings->end(), d.warnings.begin(), d.warnings.end());
      return d.value;
    }
    case LabelKind::Myc: {
      const auto& flag = c.gains[static_cast<std::size_t>(Gene::MYC)];
      if (!flag) {
        if (warnings) warnings->push_back("case '" + case_id + "': missing myc flag treated as no gain");
        return 0;
      }
      return *flag;
    }
  }
  return std::nullopt;
}

}  // namespace hit

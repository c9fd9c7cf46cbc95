#include "artgan/survey.hpp"

#include "artgan/binary_io.hpp"
#include "artgan/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace artgan {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 8> columns{"respondent_id", "image_id",   "group",   "interesting",
                                                  "inspiring",     "innovative", "overall", "attribution"};

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    std::string out(s.substr(first, last - first + 1));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
        out = out.substr(1, out.size() - 2);
    }
    return out;
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> split_csv(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) {
            return out;
        }
        start = comma + 1;
    }
}

std::string row_prefix(std::size_t line) { return "row " + std::to_string(line) + ": "; }

int parse_score(const std::string& text, std::string_view column, std::size_t line)
{
    int v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ValidationError(row_prefix(line) + std::string(column) + " '" + text + "' is not an integer");
    }
    if (v < 1 || v > 5) {
        throw ValidationError(row_prefix(line) + std::string(column) + " = " + text + " is outside 1-5");
    }
    return v;
}

std::string_view group_name(Group g) { return g == Group::real ? "real" : "generated"; }

} // namespace

std::vector<SurveyResponse> parse_responses_text(std::string_view csv)
{
    std::vector<std::string> lines;
    {
        std::size_t start = 0;
        while (start <= csv.size()) {
            const auto nl = csv.find('\n', start);
            lines.emplace_back(csv.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
            if (nl == std::string_view::npos) {
                break;
            }
            start = nl + 1;
        }
    }
    std::size_t header_line = 0;
    while (header_line < lines.size() && trim(lines[header_line]).empty()) {
        ++header_line;
    }
    if (header_line == lines.size()) {
        throw FormatError("survey file is empty");
    }
    const auto header = split_csv(lines[header_line]);
    std::array<std::size_t, columns.size()> index{};
    for (std::size_t c = 0; c < columns.size(); ++c) {
        std::size_t found = header.size();
        for (std::size_t h = 0; h < header.size(); ++h) {
            if (lower(header[h]) == columns[c]) {
                found = h;
            }
        }
        if (found == header.size()) {
            throw FormatError("survey file is missing column '" + std::string(columns[c]) + "'");
        }
        index[c] = found;
    }

    std::vector<SurveyResponse> out;
    std::set<std::pair<std::string, std::string>> seen;
    std::map<std::string, Group> image_group;
    for (std::size_t i = header_line + 1; i < lines.size(); ++i) {
        const std::size_t line = i + 1;
        if (trim(lines[i]).empty()) {
            continue;
        }
        const auto fields = split_csv(lines[i]);
        if (fields.size() != header.size()) {
            throw ValidationError(row_prefix(line) + "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
        }
        SurveyResponse r;
        r.respondent_id = fields[index[0]];
        r.image_id = fields[index[1]];
        if (r.respondent_id.empty() || r.image_id.empty()) {
            throw ValidationError(row_prefix(line) + "respondent_id and image_id must be non-empty");
        }
        const std::string group = lower(fields[index[2]]);
        if (group == "real") {
            r.group = Group::real;
        } else if (group == "generated") {
            r.group = Group::generated;
        } else {
            throw ValidationError(row_prefix(line) + "unknown group '" + fields[index[2]] + "'");
        }
        for (std::size_t s = 0; s < 4; ++s) {
            r.scores[s] = parse_score(fields[index[3 + s]], columns[3 + s], line);
        }
        const std::string attribution = lower(fields[index[7]]);
        if (attribution == "artist") {
            r.attribution = Attribution::artist;
        } else if (attribution == "computer") {
            r.attribution = Attribution::computer;
        } else {
            throw ValidationError(row_prefix(line) + "unknown attribution '" + fields[index[7]] + "'");
        }
        if (!seen.insert({r.respondent_id, r.image_id}).second) {
            throw ValidationError(row_prefix(line) + "duplicate response from " + r.respondent_id + " for image " +
                                  r.image_id);
        }
        const auto [it, inserted] = image_group.emplace(r.image_id, r.group);
        if (!inserted && it->second != r.group) {
            throw ValidationError(row_prefix(line) + "image " + r.image_id + " is listed in both groups");
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<SurveyResponse> parse_responses(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open survey file " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_responses_text(text.str());
}

double attribution_rate(const std::vector<SurveyResponse>& responses, Group group)
{
    std::size_t total = 0, artist = 0;
    for (const auto& r : responses) {
        if (r.group == group) {
            ++total;
            artist += r.attribution == Attribution::artist;
        }
    }
    if (total == 0) {
        throw InsufficientDataError("no judgments for the " + std::string(group_name(group)) + " group");
    }
    return static_cast<double>(artist) / static_cast<double>(total);
}

double computer_rate(const std::vector<SurveyResponse>& responses, Group group)
{
    return 1.0 - attribution_rate(responses, group);
}

CaseStudyReport aggregate(const std::vector<SurveyResponse>& responses, bool allow_partial)
{
    // std::map keeps image and respondent order independent of row order.
    struct ImageAcc {
        Group group;
        std::array<double, 4> sum{};
        std::size_t count = 0;
    };
    std::map<std::string, ImageAcc> images;
    std::set<std::string> respondents;
    for (const auto& r : responses) {
        auto [it, inserted] = images.try_emplace(r.image_id, ImageAcc{r.group});
        if (!inserted && it->second.group != r.group) {
            throw ValidationError("image " + r.image_id + " is listed in both groups");
        }
        for (std::size_t s = 0; s < 4; ++s) {
            it->second.sum[s] += r.scores[s];
        }
        ++it->second.count;
        respondents.insert(r.respondent_id);
    }
    if (!allow_partial) {
        for (const auto& [id, acc] : images) {
            if (acc.count != respondents.size()) {
                throw ValidationError("image " + id + " has " + std::to_string(acc.count) + " of " +
                                      std::to_string(respondents.size()) +
                                      " judgments; pass --allow-partial to aggregate incomplete data");
            }
        }
    }

    CaseStudyReport report;
    report.respondents = respondents.size();
    report.judgments = responses.size();
    for (Group g : {Group::real, Group::generated}) {
        GroupSummary& out = g == Group::real ? report.real : report.generated;
        std::vector<std::array<double, 4>> per_image;
        for (const auto& [id, acc] : images) {
            if (acc.group != g) {
                continue;
            }
            std::array<double, 4> m{};
            for (std::size_t s = 0; s < 4; ++s) {
                m[s] = acc.sum[s] / static_cast<double>(acc.count);
            }
            per_image.push_back(m);
            out.judgments += acc.count;
        }
        if (per_image.empty()) {
            throw InsufficientDataError("no images in the " + std::string(group_name(g)) + " group");
        }
        out.images = per_image.size();
        const double n = static_cast<double>(per_image.size());
        for (std::size_t s = 0; s < 4; ++s) {
            double sum = 0.0;
            for (const auto& m : per_image) {
                sum += m[s];
            }
            out.mean[s] = sum / n;
            double var = 0.0;
            for (const auto& m : per_image) {
                var += (m[s] - out.mean[s]) * (m[s] - out.mean[s]);
            }
            out.std[s] = std::sqrt(var / n);
        }
        out.attribution_artist = attribution_rate(responses, g);
        for (const auto& r : responses) {
            out.artist_judgments += r.group == g && r.attribution == Attribution::artist;
        }
    }
    return report;
}

namespace {

json group_json(const GroupSummary& g)
{
    json crit = json::object();
    for (std::size_t s = 0; s < 4; ++s) {
        crit[std::string(survey_criteria[s])] = {{"mean", g.mean[s]}, {"std", g.std[s]}};
    }
    return {{"criteria", crit},
            {"images", g.images},
            {"judgments", g.judgments},
            {"artist_judgments", g.artist_judgments},
            {"attribution_artist", g.attribution_artist}};
}

GroupSummary group_from_json(const json& j)
{
    GroupSummary g;
    for (std::size_t s = 0; s < 4; ++s) {
        const json& c = j.at("criteria").at(std::string(survey_criteria[s]));
        g.mean[s] = c.at("mean").get<double>();
        g.std[s] = c.at("std").get<double>();
    }
    g.images = j.at("images").get<std::size_t>();
    g.judgments = j.at("judgments").get<std::size_t>();
    g.artist_judgments = j.at("artist_judgments").get<std::size_t>();
    g.attribution_artist = j.at("attribution_artist").get<double>();
    return g;
}

std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

json CaseStudyReport::to_json() const
{
    return {{"real", group_json(real)},
            {"generated", group_json(generated)},
            {"respondents", respondents},
            {"judgments", judgments}};
}

CaseStudyReport CaseStudyReport::from_json(const json& doc)
{
    try {
        CaseStudyReport r;
        r.real = group_from_json(doc.at("real"));
        r.generated = group_from_json(doc.at("generated"));
        r.respondents = doc.at("respondents").get<std::size_t>();
        r.judgments = doc.at("judgments").get<std::size_t>();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed survey report: ") + e.what());
    }
}

std::string CaseStudyReport::to_csv() const
{
    std::string out = "Criterion,Real,Generated\n";
    for (std::size_t s = 0; s < 4; ++s) {
        out += std::string(survey_criteria[s]) + "," + fixed(real.mean[s], 2) + " ± " + fixed(real.std[s], 2) + "," +
               fixed(generated.mean[s], 2) + " ± " + fixed(generated.std[s], 2) + "\n";
    }
    out += "\ncriterion,group,mean\n";
    for (std::size_t s = 0; s < 4; ++s) {
        out += std::string(survey_criteria[s]) + ",real," + fixed(real.mean[s], 2) + "\n";
        out += std::string(survey_criteria[s]) + ",generated," + fixed(generated.mean[s], 2) + "\n";
    }
    out += "\ngroup,artist_percent\n";
    out += "real," + fixed(100.0 * real.attribution_artist, 1) + "\n";
    out += "generated," + fixed(100.0 * generated.attribution_artist, 1) + "\n";
    return out;
}

void emit_report_json(const CaseStudyReport& report, const std::filesystem::path& path)
{
    write_file_atomic(path, report.to_json().dump(2) + "\n");
}

void emit_report_csv(const CaseStudyReport& report, const std::filesystem::path& path)
{
    write_file_atomic(path, report.to_csv());
}

} // namespace artgan

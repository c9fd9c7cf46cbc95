#pragma once

#include <json.hpp>

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace artgan {

enum class Group { real, generated };
enum class Attribution { artist, computer };

inline constexpr std::array<std::string_view, 4> survey_criteria{"Interesting", "Inspiring", "Innovative", "Overall"};

struct SurveyResponse {
    std::string respondent_id;
    std::string image_id;
    Group group = Group::real;
    /// interesting, inspiring, innovative, overall; each 1..5
    std::array<int, 4> scores{};
    Attribution attribution = Attribution::computer;
};

/// CSV with header respondent_id,image_id,group,interesting,inspiring,
/// innovative,overall,attribution (any column order). Errors name the
/// 1-based line number.
std::vector<SurveyResponse> parse_responses(const std::filesystem::path& path);
std::vector<SurveyResponse> parse_responses_text(std::string_view csv);

struct GroupSummary {
    std::array<double, 4> mean{};
    /// Population std over per-image means.
    std::array<double, 4> std{};
    std::size_t images = 0;
    std::size_t judgments = 0;
    std::size_t artist_judgments = 0;
    /// artist_judgments / judgments
    double attribution_artist = 0.0;

    friend bool operator==(const GroupSummary&, const GroupSummary&) = default;
};

struct CaseStudyReport {
    GroupSummary real;
    GroupSummary generated;
    std::size_t respondents = 0;
    std::size_t judgments = 0;

    const GroupSummary& group(Group g) const { return g == Group::real ? real : generated; }

    nlohmann::json to_json() const;
    static CaseStudyReport from_json(const nlohmann::json& doc);
    /// Table rows "criterion, real mean ± std, generated mean ± std", then a
    /// (criterion, group, mean) block for a grouped bar chart, then the
    /// artist-attribution percentages.
    std::string to_csv() const;

    friend bool operator==(const CaseStudyReport&, const CaseStudyReport&) = default;
};

/// Two-stage aggregation: per-image means over respondents, then mean and
/// population std of those per-image means within each group. Without
/// allow_partial every respondent must have rated every image.
CaseStudyReport aggregate(const std::vector<SurveyResponse>& responses, bool allow_partial = false);

/// Fraction of the group's judgments answered "artist".
double attribution_rate(const std::vector<SurveyResponse>& responses, Group group);
/// 1 - attribution_rate, so the two always sum to exactly 1.
double computer_rate(const std::vector<SurveyResponse>& responses, Group group);

void emit_report_json(const CaseStudyReport& report, const std::filesystem::path& path);
void emit_report_csv(const CaseStudyReport& report, const std::filesystem::path& path);

} // namespace artgan

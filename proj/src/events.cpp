#include "mmpp/events.hpp"

#include "mmpp/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace mmpp {

namespace {

void validate_schema(const EventFileSchema& s) {
    if (s.accounts < 1 || s.slots < 1 || s.marks < 1) {
        throw DomainError("event matrix needs n >= 1, m >= 1, R >= 1");
    }
    if (!(s.horizon > 0.0) || !std::isfinite(s.horizon)) {
        throw DomainError("window length T must be finite and positive");
    }
}

bool in_window(double t, double horizon) { return t > 0.0 && t <= horizon; }

template <typename T>
bool parse_field(std::string_view field, T& value) {
    const char* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, value);
    return ec == std::errc() && ptr == end;
}

} // namespace

std::size_t MarkSplitSequence::count() const noexcept {
    std::size_t total = 0;
    for (const auto& list : times) total += list.size();
    return total;
}

SequenceMatrix::SequenceMatrix(EventFileSchema schema)
    : SequenceMatrix(schema, std::vector<EventList>(
                                 static_cast<std::size_t>(std::max(schema.accounts, 0)) *
                                 static_cast<std::size_t>(std::max(schema.slots, 0)))) {}

SequenceMatrix::SequenceMatrix(EventFileSchema schema, std::vector<EventList> entries)
    : schema_(schema), entries_(std::move(entries)) {
    validate_schema(schema_);
    if (entries_.size() != static_cast<std::size_t>(schema_.accounts) * schema_.slots) {
        throw DomainError("entry count does not match n * m");
    }
    for (auto& list : entries_) {
        for (const auto& e : list) {
            if (!in_window(e.time, schema_.horizon)) {
                throw DomainError("event time " + std::to_string(e.time) + " outside (0, T]");
            }
            if (e.mark < 1 || e.mark > schema_.marks) {
                throw DomainError("event mark " + std::to_string(e.mark) + " outside {1..R}");
            }
        }
        std::sort(list.begin(), list.end(), [](const MarkedEvent& a, const MarkedEvent& b) {
            return a.time < b.time || (a.time == b.time && a.mark < b.mark);
        });
    }
}

const EventList& SequenceMatrix::entry(int account, int slot) const {
    if (account < 0 || account >= schema_.accounts || slot < 0 || slot >= schema_.slots) {
        throw DomainError("entry index out of range");
    }
    return entries_[static_cast<std::size_t>(account) * schema_.slots + slot];
}

std::size_t SequenceMatrix::event_count() const noexcept {
    std::size_t total = 0;
    for (const auto& list : entries_) total += list.size();
    return total;
}

SequenceMatrix SequenceMatrix::select_accounts(std::span<const int> accounts) const {
    EventFileSchema schema = schema_;
    schema.accounts = static_cast<int>(accounts.size());
    std::vector<EventList> entries;
    entries.reserve(accounts.size() * schema_.slots);
    for (int i : accounts) {
        for (int j = 0; j < schema_.slots; ++j) entries.push_back(entry(i, j));
    }
    return SequenceMatrix(schema, std::move(entries));
}

SequenceMatrix load_events(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    EventFileSchema schema{};
    bool have_header = false;
    while (!have_header && std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto header = nlohmann::json::parse(line);
            schema.accounts = header.at("n").get<int>();
            schema.slots = header.at("m").get<int>();
            schema.marks = header.at("r").get<int>();
            schema.horizon = header.at("t").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": bad header: " + e.what(),
                             line_no);
        }
        have_header = true;
    }
    if (!have_header) throw ParseError("missing JSON header line", line_no);
    try {
        validate_schema(schema);
    } catch (const DomainError& e) {
        throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }

    std::vector<EventList> entries(static_cast<std::size_t>(schema.accounts) * schema.slots);
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string_view rest(line);
        std::string_view fields[4];
        int count = 0;
        while (count < 4) {
            const auto tab = rest.find('\t');
            fields[count++] = rest.substr(0, tab);
            if (tab == std::string_view::npos) {
                rest = {};
                break;
            }
            rest.remove_prefix(tab + 1);
        }
        int account = 0, slot = 0, mark = 0;
        double time = 0.0;
        if (count != 4 || !rest.empty() || !parse_field(fields[0], account) ||
            !parse_field(fields[1], slot) || !parse_field(fields[2], time) ||
            !parse_field(fields[3], mark)) {
            throw ParseError("line " + std::to_string(line_no) +
                                 ": expected account<TAB>slot<TAB>time<TAB>mark",
                             line_no);
        }
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (account < 0 || account >= schema.accounts) {
            throw DomainError(where + "unknown account " + std::to_string(account));
        }
        if (slot < 0 || slot >= schema.slots) {
            throw DomainError(where + "unknown slot " + std::to_string(slot));
        }
        if (!in_window(time, schema.horizon)) {
            throw DomainError(where + "time " + std::string(fields[2]) + " outside (0, " +
                              std::to_string(schema.horizon) + "]");
        }
        if (mark < 1 || mark > schema.marks) {
            throw DomainError(where + "mark " + std::to_string(mark) + " outside {1.." +
                              std::to_string(schema.marks) + "}");
        }
        entries[static_cast<std::size_t>(account) * schema.slots + slot].push_back({time, mark});
    }
    return SequenceMatrix(schema, std::move(entries));
}

void write_events(std::ostream& out, const SequenceMatrix& matrix) {
    char buf[64];
    auto shortest = [&buf](double v) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, ptr);
    };
    out << "{\"n\":" << matrix.accounts() << ",\"m\":" << matrix.slots()
        << ",\"r\":" << matrix.marks() << ",\"t\":" << shortest(matrix.horizon()) << "}\n";
    for (int i = 0; i < matrix.accounts(); ++i) {
        for (int j = 0; j < matrix.slots(); ++j) {
            for (const auto& e : matrix.entry(i, j)) {
                auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, e.time,
                                               std::chars_format::fixed, 9);
                out << i << '\t' << j << '\t' << std::string_view(buf, ptr - buf) << '\t'
                    << e.mark << '\n';
            }
        }
    }
}

MarkSplitSequence split_by_mark(const EventList& entry, int marks) {
    if (marks < 1) throw DomainError("mark count must be >= 1");
    MarkSplitSequence split;
    split.times.resize(marks);
    for (const auto& e : entry) {
        if (e.mark < 1 || e.mark > marks) {
            throw DomainError("mark " + std::to_string(e.mark) + " outside {1.." +
                              std::to_string(marks) + "}");
        }
        split.times[e.mark - 1].push_back(e.time);
    }
    for (auto& list : split.times) std::sort(list.begin(), list.end());
    return split;
}

std::vector<AggregatedRow> aggregate_rows(const SequenceMatrix& matrix) {
    std::vector<AggregatedRow> rows;
    rows.reserve(matrix.accounts());
    for (int i = 0; i < matrix.accounts(); ++i) {
        AggregatedRow row{MarkSplitSequence{}, matrix.slots()};
        row.pooled.times.resize(matrix.marks());
        for (int j = 0; j < matrix.slots(); ++j) {
            for (const auto& e : matrix.entry(i, j)) row.pooled.times[e.mark - 1].push_back(e.time);
        }
        for (auto& list : row.pooled.times) std::sort(list.begin(), list.end());
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<MarkSplitSequence> account_rows(const SequenceMatrix& matrix) {
    std::vector<MarkSplitSequence> rows;
    rows.reserve(matrix.accounts());
    if (matrix.slots() == 1) {
        for (int i = 0; i < matrix.accounts(); ++i) {
            rows.push_back(split_by_mark(matrix.entry(i, 0), matrix.marks()));
        }
        return rows;
    }
    for (auto& row : aggregate_rows(matrix)) rows.push_back(std::move(row.pooled));
    return rows;
}

} // namespace mmpp

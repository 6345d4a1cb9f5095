#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace mmpp {

/// One event: a time in (0, T] and a mark in {1..R}.
struct MarkedEvent {
    double time;
    int mark;

    friend bool operator==(const MarkedEvent&, const MarkedEvent&) = default;
};

using EventList = std::vector<MarkedEvent>;

/// Per-mark sorted event times of one sequence; `times[r]` holds mark r + 1.
struct MarkSplitSequence {
    std::vector<std::vector<double>> times;

    int marks() const noexcept { return static_cast<int>(times.size()); }
    std::size_t count() const noexcept;
};

/// Account row pooled over all slots, per mark. Duplicate times are kept.
struct AggregatedRow {
    MarkSplitSequence pooled;
    int slots;
};

/// Header of the event file: dimensions and observation window.
struct EventFileSchema {
    int accounts;
    int slots;
    int marks;
    double horizon;
};

/// n x m matrix of marked event sequences observed on [0, T].
/// Immutable once built; each entry is kept sorted by (time, mark).
class SequenceMatrix {
public:
    /// `entries` is row-major (account-major), size n * m. Throws DomainError
    /// on any invariant violation.
    SequenceMatrix(EventFileSchema schema, std::vector<EventList> entries);
    /// All-empty matrix.
    explicit SequenceMatrix(EventFileSchema schema);

    int accounts() const noexcept { return schema_.accounts; }
    int slots() const noexcept { return schema_.slots; }
    int marks() const noexcept { return schema_.marks; }
    double horizon() const noexcept { return schema_.horizon; }
    const EventFileSchema& schema() const noexcept { return schema_; }

    const EventList& entry(int account, int slot) const;
    std::size_t event_count() const noexcept;

    /// Sub-matrix made of the given accounts, in the given order.
    SequenceMatrix select_accounts(std::span<const int> accounts) const;

private:
    EventFileSchema schema_;
    std::vector<EventList> entries_;
};

/// Reads the line-delimited event format: a JSON header
/// {"n":..,"m":..,"r":..,"t":..} followed by `account\tslot\ttime\tmark` lines.
/// Throws ParseError (with line number) or DomainError.
SequenceMatrix load_events(std::istream& in);
/// Writes the same format; times with 9 fractional digits.
void write_events(std::ostream& out, const SequenceMatrix& matrix);

/// Partition by mark; each list sorted ascending.
MarkSplitSequence split_by_mark(const EventList& entry, int marks);

/// Pools each account's events over all slots, per mark.
std::vector<AggregatedRow> aggregate_rows(const SequenceMatrix& matrix);

/// Rows used by the single-level learner: the (only) slot of every account
/// when m = 1, the pooled row otherwise.
std::vector<MarkSplitSequence> account_rows(const SequenceMatrix& matrix);

} // namespace mmpp

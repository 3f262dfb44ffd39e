#!/usr/bin/env python3
"""Regenerate src/satd_sentinel/data/desk_corpus.tsv.

On-hold comments come from deferral phrasings ("do X once <issue> is
fixed"); negatives are comments that cite an issue only to document the
code. Output is deterministic for a given --seed. After regenerating, audit
the file by hand and retrain the bundled model:

    python scripts/make_desk_corpus.py
    satd-sentinel train --corpus src/satd_sentinel/data/desk_corpus.tsv \
        --out src/satd_sentinel/data/desk_model.bin
"""

import argparse
import random
from pathlib import Path

ON_HOLD = [
    "{tag}{Action} once {ref} is fixed",
    "{tag}Remove this workaround when {ref} is resolved",
    "{tag}Workaround for {ref}; {action} after the fix is merged upstream",
    "{tag}{Thing} until {ref} gets fixed",
    "{tag}We can {action} after {ref} is closed",
    "{tag}Temporary: {thing} until {ref} lands",
    "{tag}Waiting for {ref} before we can {action}",
    "{tag}Blocked by {ref}. {Thing} for now",
    "{tag}{Action} after {ref}",
    "{tag}Can be simplified once {ref} ships in a release",
    "{tag}Remove when {ref} is released",
    "{tag}Keep this until {ref} is addressed, then {action}",
    "{tag}{Thing} because of {ref}. {Action} when that is fixed",
    "{tag}Replace with {alt} as soon as {ref} is available",
    "{tag}Test disabled pending {ref}",
    "{tag}Ignored until {ref} is fixed",
    "{tag}Uncomment after {ref} is resolved",
    "{tag}Need to {action} when {ref} is done",
    "{tag}Should be removed once {ref} is in",
    "{tag}Hold off on this, it depends on {ref}",
    "{tag}The {topic} problem can be fixed after {ref} is resolved",
    "{tag}{Thing} as a stopgap; the real fix depends on {ref}",
    "{tag}Postponed until {ref}",
    "{tag}Revisit after {ref} is fixed upstream",
    "{tag}This copy exists only because of {ref}, delete it once the upstream fix is out",
    "{tag}{Thing} for now, then {action} once {ref} is resolved",
    "{tag}Use this for now and {action} once {ref} is merged",
    "{tag}Drop this branch when {ref} is closed",
    "{tag}{Action} as soon as {ref} is fixed in the library",
    "{tag}Not possible yet, see {ref}. {Action} later",
]

CROSS_REFERENCE = [
    "{ntag}See {ref} for background",
    "{ntag}See {ref} for details on {topic}",
    "{ntag}Fixes {ref}",
    "{ntag}Regression test for {ref}",
    "{ntag}Implements the behavior requested in {ref}",
    "{ntag}Added for {ref}",
    "{ntag}{Topic} is explained in {ref}",
    "{ntag}Originally reported in {ref}",
    "{ntag}Ported from the discussion in {ref}",
    "{ntag}Related: {ref}",
    "{ntag}This guards against the crash from {ref}",
    "{ntag}Test case taken from {ref}",
    "{ntag}Behavior changed in {ref}; callers rely on it",
    "{ntag}Design notes are in {ref}",
    "{ntag}Introduced by {ref} to support {topic}",
    "{ntag}Follows the convention agreed in {ref}",
    "{ntag}Bug {ref}: null keys were dropped, covered here",
    "{ntag}Reproduces the scenario from {ref}",
    "{ntag}For the rationale behind {topic}, see {ref}",
    "{ntag}{ref} describes why {topic} uses this order",
    "{ntag}Called once per request, see {ref}",
    "{ntag}This was fixed in {ref}; the test keeps it that way",
    "{ntag}After {ref} was fixed, {topic} no longer needs locking",
    "{ntag}Since {ref} {topic} is computed eagerly",
    "{ntag}Matches the upstream API described in {ref}",
    "{ntag}Order matters here, as discussed in {ref}",
    "{ntag}Kept for compatibility with clients from {ref}",
    "{ntag}Part of the feature tracked in {ref}",
    "{ntag}Covers the edge case reported in {ref}",
    "{ntag}Resolved in {ref} by validating the input first",
]

ACTIONS = [
    "remove this workaround",
    "switch back to the stream API",
    "drop the reflection hack",
    "use the native method",
    "delete this copy",
    "inline the helper",
    "re-enable the test",
    "call the async API directly",
    "restore the original parser",
    "remove the manual retry",
    "migrate to the new builder",
    "clean up this adapter",
]

THINGS = [
    "copying the array manually",
    "using reflection to reach the field",
    "catching the generic exception",
    "sleeping 100ms between calls",
    "disabling the cache",
    "parsing the header by hand",
    "padding the buffer",
    "forcing a full rebuild",
    "wrapping the stream twice",
    "skipping validation",
]

TOPICS = [
    "the retry policy",
    "the cache key format",
    "UTF-8 handling",
    "thread safety",
    "the null handling contract",
    "the index layout",
    "tokenization",
    "the ranking formula",
    "connection pooling",
    "date parsing",
]

ALTS = ["the builder API", "Files.readString", "the standard collector", "a record class", "the JDK client"]
OWNERS = [("mockito", "mockito"), ("google", "guava"), ("apache", "commons-lang"), ("junit-team", "junit5"), ("square", "okhttp")]
TAGS = ["TODO: ", "TODO ", "FIXME: ", "HACK: ", "XXX: ", "", "", "TODO(dev): "]
NTAGS = ["", "", "", "NOTE: ", "Note: ", "TODO: "]

# free-form comments written by hand; they do not follow any template above
HANDWRITTEN = [
    ("OnHold", "The JDK still rounds this wrong (JDK bug tracked in #4412), so we round manually. Drop it on the next LTS bump"),
    ("OnHold", "Can't use Optional here yet: #812 would break serialization for old clients"),
    ("OnHold", "hack hack hack. remove with #77"),
    ("OnHold", "Left the old code path in until google/guava#3990 ships, please do not delete"),
    ("OnHold", "This sleep papers over the race in #1203. Take it out when the fix is released"),
    ("OnHold", "Duplicated from commons-lang because apache/commons-lang#1088 is still open"),
    ("OnHold", "Once upstream merges square/okhttp#6015 we should use their interceptor instead"),
    ("OnHold", "Not thread safe! Fine for now, revisit when issue 301 is sorted out"),
    ("OnHold", "Marked @Disabled: flaky on CI because of #2210, turn back on when that's done"),
    ("OnHold", "Stub implementation, real one depends on #93"),
    ("OnHold", "we pin version 2.3 because of https://github.com/junit-team/junit5/issues/1877; bump it once that is released"),
    ("OnHold", "Hard-coded locale works around #540, make configurable after it's resolved"),
    ("OnHold", "The ugly cast goes away when #1500 lands"),
    ("OnHold", "Remember to delete this shim when mockito/mockito#769 is fixed"),
    ("OnHold", "Manual escaping here; switch to the library escaper after #18 gets merged"),
    ("OnHold", "Placeholder until the API from #2001 is available"),
    ("OnHold", "DO NOT REMOVE before #455 is closed"),
    ("OnHold", "Slow path kept around while issue 98 is open"),
    ("OnHold", "Revert this change as soon as the upstream regression (#3321) is fixed"),
    ("OnHold", "Copying instead of sharing the buffer for now; #64 needs to be fixed first"),
    ("CrossReference", "Issue #12: the parser must accept a trailing comma"),
    ("CrossReference", "#45 explains why this is a LinkedHashMap and not a HashMap"),
    ("CrossReference", "Historically this returned null, changed in #300"),
    ("CrossReference", "Works around nothing anymore; the bug from #77 was fixed years ago"),
    ("CrossReference", "Throws IllegalStateException to match what users asked for in google/guava#2001"),
    ("CrossReference", "Keep in sync with the table in #918"),
    ("CrossReference", "Thanks to the reporter of issue 431 for the test data"),
    ("CrossReference", "Equivalent to the snippet posted in https://github.com/square/okhttp/issues/5012"),
    ("CrossReference", "The timeout is 30s by agreement, see the thread in #2290"),
    ("CrossReference", "Guarded since #640 because empty input used to crash"),
    ("CrossReference", "Maps 1:1 onto the states listed in #88"),
    ("CrossReference", "mockito/mockito#1509 is why we verify with times(1) explicitly"),
    ("CrossReference", "Users rely on this ordering (#700); changing it is a breaking change"),
    ("CrossReference", "Benchmark numbers for this loop are in #1412"),
    ("CrossReference", "Closed #35 by normalizing the path before comparing"),
    ("CrossReference", "This is the fix for #990, see also the test below"),
    ("CrossReference", "Per #204, blank lines are significant in this format"),
    ("CrossReference", "Defaults chosen in issue 17 after a long discussion"),
    ("CrossReference", "We resolved #58 by splitting the lock; do not merge them again"),
    ("CrossReference", "Algorithm from the paper linked in #2718"),
]


def make_ref(rng: random.Random) -> str:
    n = rng.randint(2, 30000)
    owner, repo = rng.choice(OWNERS)
    form = rng.randrange(5)
    if form == 0:
        return f"#{n}"
    if form == 1:
        return f"issue {n}"
    if form == 2:
        return f"{owner}/{repo}#{n}"
    if form == 3:
        return f"https://github.com/{owner}/{repo}/issues/{n}"
    return f"bug #{n}"


def fill(template: str, rng: random.Random) -> str:
    action, thing, topic = rng.choice(ACTIONS), rng.choice(THINGS), rng.choice(TOPICS)
    text = template.format(
        tag=rng.choice(TAGS),
        ntag=rng.choice(NTAGS),
        ref=make_ref(rng),
        action=action,
        Action=action[0].upper() + action[1:],
        thing=thing,
        Thing=thing[0].upper() + thing[1:],
        topic=topic,
        Topic=topic[0].upper() + topic[1:],
        alt=rng.choice(ALTS),
    )
    return text[0].upper() + text[1:] if text[0].isalpha() else text


def generate(per_class: int, seed: int):
    rng = random.Random(seed)
    records = []
    for label, templates in (("OnHold", ON_HOLD), ("CrossReference", CROSS_REFERENCE)):
        seen = set()
        i = 0
        while len(seen) < per_class:
            text = fill(templates[i % len(templates)], rng)
            i += 1
            if text not in seen:
                seen.add(text)
                records.append((label, text))
    records.extend(HANDWRITTEN)
    rng.shuffle(records)
    return records


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--per-class", type=int, default=160)
    parser.add_argument("--seed", type=int, default=2021)
    parser.add_argument(
        "--out",
        type=Path,
        default=Path(__file__).resolve().parent.parent / "src/satd_sentinel/data/desk_corpus.tsv",
    )
    args = parser.parse_args()
    records = generate(args.per_class, args.seed)
    args.out.write_text("".join(f"{label}\t{text}\n" for label, text in records), encoding="utf-8")
    print(f"wrote {len(records)} records to {args.out}")


if __name__ == "__main__":
    main()

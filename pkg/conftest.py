# keep collection away from the read-only input corpus: some of its files
# match test discovery patterns and execute scripts at import time
collect_ignore = ["examples", "src"]

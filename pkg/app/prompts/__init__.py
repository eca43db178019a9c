"""FIM template tables, one JSON file per model family."""

"""Design models from anthropometric corpora by covering measurement space with tolerance boxes."""

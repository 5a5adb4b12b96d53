from prometheus_client import Counter, Gauge

# Prometheus metrics
adslite_requests = Counter('adslite_requests', 'HTTP requests by route and status', ['route', 'status'])
adslite_corpus_records = Gauge('adslite_corpus_records', 'Number of records in the corpus')
adslite_index_terms = Gauge('adslite_index_terms', 'Number of distinct terms in the inverted index')
adslite_ingest_rejected = Counter('adslite_ingest_rejected', 'Rejected interchange lines by reason', ['reason'])
adslite_digests = Counter('adslite_digests', 'Digest documents produced', ['database'])
adslite_libraries = Gauge('adslite_libraries', 'Number of private libraries')

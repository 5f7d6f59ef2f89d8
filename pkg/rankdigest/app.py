"""Streamlit explorer: summarize pasted documents for a query, rerank them, show the window plan."""

import base64

import streamlit as st

from rankdigest.config import WindowPlan
from rankdigest.errors import BackendUnavailable, CheckpointError, RankDigestError
from rankdigest.model import Document, Query, RankedList
from rankdigest.policy import PolicySummarizer, load_checkpoint
from rankdigest.rerank import LexicalReranker, sliding_window_rerank
from rankdigest.renderer import render_window_plan
from rankdigest.retrieval import build_index
from rankdigest.summarize import FirstPSummarizer, summarize_pointwise

st.set_page_config(page_title="rankdigest explorer", layout="wide", initial_sidebar_state="collapsed")

st.markdown(
    """
    <style>
    .stApp {
        background: linear-gradient(145deg, #0a0a0f 0%, #1a1a24 50%, #0d0d12 100%);
        background-attachment: fixed;
    }
    .main-title-block {
        text-align: center;
        padding: 2rem 0 1.5rem;
        margin-bottom: 1.5rem;
    }
    .main-title {
        font-family: -apple-system, BlinkMacSystemFont, 'SF Pro Display', 'Segoe UI', sans-serif;
        font-size: 2.5rem;
        font-weight: 700;
        color: #c4b5fd;
    }
    .main-subtitle {
        font-size: 1rem;
        color: rgba(196, 181, 253, 0.9);
        font-weight: 300;
    }
    .stTextArea label, .stTextInput label {
        color: #c4b5fd !important;
    }
    .stTextArea textarea {
        background-color: rgba(30, 30, 40, 0.8) !important;
        color: #e2e8f0 !important;
        border-radius: 12px;
    }
    h3 {
        color: rgba(196, 181, 253, 0.95) !important;
        font-weight: 600;
    }
    </style>
    """,
    unsafe_allow_html=True,
)

st.markdown(
    '<div class="main-title-block">'
    '<h1 class="main-title">Summarize, then Rank</h1>'
    '<p class="main-subtitle">Query-grounded summaries feeding a listwise reranker</p>'
    "</div>",
    unsafe_allow_html=True,
)

if "last_result" not in st.session_state:
    st.session_state.last_result = None

query_text = st.text_input("Query", placeholder="what does the policy keep?")
documents_text = st.text_area(
    "Candidate documents",
    height=260,
    help="One document per block; separate blocks with a line holding only ---",
)

col1, col2, col3 = st.columns(3)
with col1:
    summarizer_kind = st.selectbox("Summarizer", ["firstp", "policy"])
with col2:
    firstp_k = st.number_input("FirstP tokens", min_value=1, value=128)
    checkpoint_path = st.text_input("Policy checkpoint", value="")
with col3:
    window_size = st.number_input("Window size", min_value=1, value=20)
    step = st.number_input("Step", min_value=1, value=10)

run_btn = st.button("Rerank", type="primary", use_container_width=True)

if run_btn:
    blocks = [block.strip() for block in documents_text.split("\n---\n") if block.strip()]
    if not query_text or not blocks:
        st.warning("Please enter a query and at least one document")
    else:
        try:
            plan = WindowPlan(window_size=int(window_size), step=int(step))
            docs = [Document(f"doc{i + 1}", "", block) for i, block in enumerate(blocks)]
            query = Query("explore", query_text)
            index = build_index(docs)
            if summarizer_kind == "policy":
                summarizer = PolicySummarizer(load_checkpoint(checkpoint_path), index)
            else:
                summarizer = FirstPSummarizer(int(firstp_k))
            summaries = summarize_pointwise(summarizer, query, docs)
            texts = {s.doc_id: s.text for s in summaries}
            retrieved = RankedList.from_order(query.query_id, [d.doc_id for d in docs], "input")
            reranked = sliding_window_rerank(LexicalReranker(index), query, retrieved, texts, plan)
            svg = render_window_plan(len(docs), plan)
            st.session_state.last_result = (summaries, reranked.doc_ids(), svg)
        except CheckpointError as e:
            st.error(f"Checkpoint error: {e.message}")
        except BackendUnavailable as e:
            st.error(f"Backend unavailable: {e.message}")
        except RankDigestError as e:
            st.error(f"Error: {e.message}")
        except ValueError as e:
            st.error(f"Invalid input: {str(e)}")

if st.session_state.last_result is not None:
    summaries, order, svg = st.session_state.last_result
    by_id = {s.doc_id: s for s in summaries}
    st.markdown("### Final order")
    for rank, doc_id in enumerate(order, start=1):
        summary = by_id[doc_id]
        flag = " (safeguard)" if summary.is_safeguard else ""
        st.markdown(f"**{rank}. {doc_id}**{flag}: {summary.text}")
    st.markdown("### Window traversal")
    svg_b64 = base64.b64encode(svg.encode("utf-8")).decode("utf-8")
    st.markdown(
        f'<div style="text-align: center; width: 100%; padding: 1rem 0;">'
        f'<img src="data:image/svg+xml;base64,{svg_b64}" style="max-width: 100%; height: auto;">'
        f"</div>",
        unsafe_allow_html=True,
    )
    with st.expander("Summaries"):
        st.json([s.to_record() for s in summaries])

st.markdown("---")
st.markdown("<small>Rerank backend: lexical overlap over summaries</small>", unsafe_allow_html=True)

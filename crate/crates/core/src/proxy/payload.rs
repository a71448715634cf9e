use crate::chainsim::AccountProof;
use crate::codec::{put_varint, Reader};
use crate::proofs::{MultiProof, ProofError};

pub(crate) const SYNC_PAYLOAD_TAG: u8 = 0x50;

/// What a relayer submits: the contract's account proof at the source block
/// and a multi proof of the touched storage keys under that account's root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncPayload {
    pub source_block: u64,
    pub account_proof: AccountProof,
    pub multi_proof: MultiProof,
}

/// Which part of a payload failed to decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadDecodeError {
    Envelope(ProofError),
    AccountProof(ProofError),
    MultiProof(ProofError),
}

impl SyncPayload {
    /// `0x50 ‖ varint block ‖ account proof ‖ multi proof`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![SYNC_PAYLOAD_TAG];
        put_varint(&mut out, self.source_block);
        self.account_proof.write(&mut out);
        out.extend_from_slice(&self.multi_proof.encode());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PayloadDecodeError> {
        let mut r = Reader::new(bytes);
        let envelope = |e: crate::codec::DecodeError| PayloadDecodeError::Envelope(e.into());
        if r.byte().map_err(envelope)? != SYNC_PAYLOAD_TAG {
            return Err(PayloadDecodeError::Envelope(ProofError::MalformedSubtree(
                "not a sync payload",
            )));
        }
        let source_block = r.varint().map_err(envelope)?;
        let account_proof = AccountProof::read(&mut r).map_err(PayloadDecodeError::AccountProof)?;
        let multi_proof = MultiProof::decode(r.take(r.remaining()).map_err(envelope)?)
            .map_err(PayloadDecodeError::MultiProof)?;
        Ok(SyncPayload {
            source_block,
            account_proof,
            multi_proof,
        })
    }
}
